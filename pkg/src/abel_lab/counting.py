"""Counting functions, convergence exponents and canonical-product transforms.

A counting function ``n(r)`` counts the elements of an ascending positive
sequence lying strictly below ``r``. For singular values ``s_m`` the
sequence is ``1/s_m``.

The transform used throughout the growth bounds is

    beta(r) = r^(-order) * ( int_0^r n(t)/t dt + r int_r^inf n(t)/t^2 dt ),

evaluated in closed form for a step function. Truncated sequences are
extended by a power law fitted to the last half of the thresholds.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DivergentTailError, ValidationError
from .spectral import as_matrix

EXPONENT_RESOLUTION = 1e-3
SLOPE_SE_CAP = 0.05


def counting_function(seq, r: float) -> int:
    """Number of elements of ``seq`` strictly below ``r``."""
    seq = np.asarray(seq, dtype=float)
    if seq.size and np.any(seq <= 0):
        raise ValidationError("counting sequences must be strictly positive")
    return int(np.sum(seq < r))


def _linfit(X: np.ndarray, y: np.ndarray):
    """Least squares with coefficient standard errors."""
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = max(len(y) - X.shape[1], 1)
    sigma2 = float(resid @ resid) / dof
    try:
        cov = sigma2 * np.linalg.inv(X.T @ X)
        se = np.sqrt(np.abs(np.diag(cov)))
    except np.linalg.LinAlgError:
        se = np.full(X.shape[1], np.inf)
    return coef, se


@dataclass(frozen=True)
class CountingProfile:
    """Step function ``n(r)`` of an ascending threshold sequence."""

    thresholds: np.ndarray
    fitted_exponent: float = float("nan")
    exponent_ci: tuple = (float("nan"), float("nan"))

    @classmethod
    def from_thresholds(cls, thresholds) -> "CountingProfile":
        a = np.sort(np.asarray(thresholds, dtype=float))
        a = a[np.isfinite(a)]
        if a.size and a[0] <= 0:
            raise ValidationError("thresholds must be positive")
        kappa, ci = fit_counting_exponent(a)
        return cls(a, kappa, ci)

    @classmethod
    def from_singular_values(cls, s, rel_floor: float = 1e-13) -> "CountingProfile":
        """Profile of ``1/s_m``; values below ``rel_floor * max(s)`` count as zero."""
        s = np.asarray(s, dtype=float)
        if s.size == 0:
            return cls.from_thresholds([])
        s = s[s > rel_floor * s.max()]
        return cls.from_thresholds(1.0 / s)

    def __call__(self, r):
        return np.searchsorted(self.thresholds, r, side="left")

    @property
    def size(self) -> int:
        return self.thresholds.size


def fit_counting_exponent(a: np.ndarray):
    """Power ``kappa`` in ``n(t) ~ C t^kappa`` from the last half of the thresholds."""
    if a.size < 4:
        return float("nan"), (float("nan"), float("nan"))
    h = a.size // 2
    idx = np.arange(h + 1, a.size + 1, dtype=float)
    X = np.column_stack([np.ones(idx.size), np.log(a[h:])])
    if np.ptp(X[:, 1]) == 0:
        return float("inf"), (float("inf"), float("inf"))
    coef, se = _linfit(X, np.log(idx))
    k = float(coef[1])
    return k, (k - 2 * se[1], k + 2 * se[1])


# ---------------------------------------------------------------- exponents


@dataclass(frozen=True)
class ExponentFit:
    """Tail model ``ln s_m = c0 + slope ln m + log_coef ln ln(m+1)``."""

    rho: float
    ci: tuple
    slope: float
    slope_se: float
    log_coef: float
    log_coef_se: float
    intercept: float
    grid_convergent: dict = field(default_factory=dict)


def _check_descending(s):
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise ValidationError("sequence must be strictly positive")
    bad = np.flatnonzero(np.diff(s) > 0)
    if bad.size:
        k = int(bad[0])
        raise ValidationError(f"sequence must be nonincreasing; s[{k + 1}] > s[{k}]")
    return s


def convergence_exponent(s, grid: Optional[Sequence[float]] = None) -> ExponentFit:
    """Estimate ``inf{x : sum s_n^x < inf}`` for a nonincreasing sequence.

    The last half of the sequence is regressed on ``ln m`` and
    ``ln ln(m+1)``; only the power coefficient decides the exponent, so
    logarithmic corrections do not bias it. When that slope is poorly
    determined the log term is dropped. Super-polynomial decay shows up
    as a very steep slope and an exponent near zero.

    ``grid`` optionally lists trial exponents; for each the fitted tail
    model decides whether ``sum s_n^x`` converges.
    """
    s = _check_descending(s)
    if s.size < 16:
        raise ValidationError("at least 16 terms are needed")
    m = np.arange(1, s.size + 1, dtype=float)
    h = s.size // 2
    y = np.log(s[h:])
    X = np.column_stack([np.ones(s.size - h), np.log(m[h:]), np.log(np.log(m[h:] + 1))])
    coef, se = _linfit(X, y)
    if not (coef[1] < 0 and se[1] <= SLOPE_SE_CAP):
        # the log correction is not identifiable on this range: plain power law
        c2, s2 = _linfit(X[:, :2], y)
        coef, se = np.array([c2[0], c2[1], 0.0]), np.array([s2[0], s2[1], 0.0])
    b, c = float(coef[1]), float(coef[2])
    if b >= 0:
        rho, ci = float("inf"), (float("inf"), float("inf"))
    else:
        rho = -1.0 / b
        lo_b, hi_b = b - 2 * se[1], b + 2 * se[1]
        ci = (-1.0 / lo_b, -1.0 / hi_b if hi_b < 0 else float("inf"))
    flags = {}
    for x in grid or ():
        # terms behave like m^(b x) (ln m)^(c x)
        p = b * x
        flags[float(x)] = bool(p < -1 - EXPONENT_RESOLUTION or
                               (abs(p + 1) <= EXPONENT_RESOLUTION and c * x < -1))
    return ExponentFit(rho, ci, b, float(se[1]), c, float(se[2]), float(coef[0]), flags)


@dataclass(frozen=True)
class StarReport:
    little_o: bool
    log_condition: bool
    witnesses: dict


def _tends_to_zero(power: float, log_power: float, tol: float) -> bool:
    """Does ``m^power (ln m)^log_power`` tend to zero?"""
    if power < -tol:
        return True
    if power > tol:
        return False
    return log_power < -tol


def _trend(y: np.ndarray) -> dict:
    h = y.size // 2
    tail = y[h:]
    m = np.arange(h + 1, y.size + 1, dtype=float)
    pos = tail > 0
    slope = float(np.polyfit(np.log(m[pos]), np.log(tail[pos]), 1)[0]) if pos.sum() > 1 else float("nan")
    return {"last_half_max": float(np.max(tail)), "last": float(tail[-1]), "log_slope": slope}


def check_star_conditions(s, rho: float, tol: float = 0.1) -> StarReport:
    """Check ``s_m m^(1/rho) -> 0`` and ``m ln(1/s_m) s_m^rho -> 0``.

    Limits are decided on the fitted tail model of ``s`` (see
    :func:`convergence_exponent`): with ``s ~ m^b (ln m)^c``,

    * ``s m^(1/rho) ~ m^(b+1/rho) (ln m)^c``,
    * ``m ln(1/s) s^rho ~ m^(1+rho b) (ln m)^(1+rho c)``.

    The raw sequences are summarized in ``witnesses`` together with the
    empirical smallness test (last-half values below ``tol`` and a negative
    log-slope).
    """
    if float(rho).is_integer():
        raise ValidationError("rho must be a positive non-integer")
    if rho <= 0:
        raise ValidationError("rho must be positive")
    s = _check_descending(s)
    fit = convergence_exponent(s)
    b, c = fit.slope, fit.log_coef
    res = max(EXPONENT_RESOLUTION, 3 * fit.slope_se)
    little_o = _tends_to_zero(b + 1 / rho, c, res)
    log_cond = _tends_to_zero(1 + rho * b, 1 + rho * c, max(EXPONENT_RESOLUTION, 3 * rho * fit.slope_se))
    m = np.arange(1, s.size + 1, dtype=float)
    y1 = s * m ** (1 / rho)
    y2 = m * np.log(1 / s) * s ** rho
    w1, w2 = _trend(y1), _trend(y2)
    for w in (w1, w2):
        w["empirical_small"] = bool(w["last_half_max"] < tol and w["log_slope"] < 0)
    witnesses = {
        "tail_model": {"slope": b, "log_coef": c, "rho_fit": fit.rho},
        "little_o": dict(w1, power=b + 1 / rho, log_power=c),
        "log_condition": dict(w2, power=1 + rho * b, log_power=1 + rho * c),
    }
    return StarReport(little_o, log_cond, witnesses)


# ---------------------------------------------------------------- beta transform


@dataclass(frozen=True)
class BetaValue:
    value: float
    truncated: float
    tail: float
    error: float
    decays: bool


def _beta_truncated(a: np.ndarray, r: float, order: float, lower: float = 0.0) -> float:
    if a.size == 0:
        return 0.0
    if r < lower:
        return r ** (1 - order) * float(np.sum(1.0 / np.maximum(lower, a)))
    below = a[a < r]
    inner = float(np.sum(np.log(r / np.maximum(below, lower)))) if below.size else 0.0
    outer = r * float(np.sum(1.0 / np.maximum(r, a)))
    return r ** (-order) * (inner + outer)


def beta_transform(profile: CountingProfile, r: float, order: float, lower: float = 0.0,
                   extrapolate: bool = True) -> BetaValue:
    """``r^(-order) (int_lower^r n/t dt + r int_r^inf n/t^2 dt)``.

    For ``r < lower`` the first integral is dropped and the second starts at
    ``lower``. With ``extrapolate`` the profile is continued past its last
    threshold ``a_N`` as ``N (t/a_N)^kappa``; the added amount is reported as
    ``tail`` and doubles as the error estimate. Extrapolation requires
    ``kappa < min(1, order)``, otherwise :class:`DivergentTailError`.
    """
    if r <= 0:
        raise ValidationError("r must be positive")
    a = profile.thresholds
    trunc = _beta_truncated(a, r, order, lower)
    tail = 0.0
    kappa = profile.fitted_exponent
    if extrapolate and a.size >= 4:
        if not np.isfinite(kappa) or kappa >= min(1.0, order):
            raise DivergentTailError(
                f"fitted counting exponent {kappa:.4g} >= {min(1.0, order):.4g}: "
                "extrapolated tail does not decay"
            )
        N, aN = float(a.size), float(a[-1])
        if r <= aN:
            extra = r * N * kappa / ((1 - kappa) * aN)
        else:
            extra = (N * ((r / aN) ** kappa - 1) / kappa - N * math.log(r / aN)
                     + N * (r / aN) ** kappa / (1 - kappa) - N)
        tail = r ** (-order) * extra
    decays = bool(np.isfinite(kappa) and kappa < order) if a.size >= 4 else True
    return BetaValue(trunc + tail, trunc, tail, abs(tail), decays)


def beta_integral(profile: CountingProfile, r: float, alpha: float, m: int = 0,
                  extrapolate: bool = True) -> BetaValue:
    """The transform with exponent ``alpha/(m+1)``."""
    return beta_transform(profile, r, alpha / (m + 1), extrapolate=extrapolate)


def beta_quadrature(n_func, r: float, order: float, upper: float, breaks=()) -> float:
    """Reference value of the transform by adaptive quadrature on ``[0, upper]``.

    ``n_func`` must vanish near zero and be constant beyond ``upper``;
    ``breaks`` lists its jump points so each smooth piece is integrated alone.
    """
    from scipy.integrate import quad

    def piecewise(g, a, b):
        cuts = [a] + [x for x in sorted(breaks) if a < x < b] + [b]
        return sum(quad(g, u, v, limit=200)[0] for u, v in zip(cuts, cuts[1:]))

    n_top = n_func(upper * 2)
    first = piecewise(lambda t: n_func(t) / t, 1e-12, r)
    second = piecewise(lambda t: n_func(t) / t ** 2, r, upper) + n_top / max(upper, r)
    return r ** (-order) * (first + r * second)


# ---------------------------------------------------------------- powers


@dataclass(frozen=True)
class PowerCountingReport:
    m: int
    satisfied: bool
    max_slack: int
    min_slack: int
    violations: list
    grid: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray


def power_counting_check(B, m: int, r_grid=None) -> PowerCountingReport:
    """Check ``n_{B^{m+1}}(r^{m+1}) <= (m+1) n_B(r)`` on a grid of ``r``."""
    A = as_matrix(B)
    sB = np.linalg.svd(A, compute_uv=False)
    sP = np.linalg.svd(np.linalg.matrix_power(A, m + 1), compute_uv=False)
    floor = A.shape[0] * np.finfo(float).eps
    pB = CountingProfile.from_singular_values(sB[sB > floor * sB.max()]) if sB.max() > 0 else CountingProfile.from_thresholds([])
    top = sP.max() if sP.size else 0.0
    pP = CountingProfile.from_singular_values(sP[sP > floor * max(top, sB.max() ** (m + 1))]) if top > 0 else CountingProfile.from_thresholds([])
    if r_grid is None:
        lo = 0.5 / sB.max() if sB.max() > 0 else 1.0
        hi = 2.0 * pB.thresholds[-1] if pB.size else 2.0
        r_grid = np.geomspace(lo, hi, 50)
    r_grid = np.asarray(r_grid, dtype=float)
    lhs = pP(r_grid ** (m + 1))
    rhs = (m + 1) * pB(r_grid)
    slack = rhs - lhs
    bad = [float(r) for r, sl in zip(r_grid, slack) if sl < 0]
    return PowerCountingReport(m, not bad, int(slack.max()), int(slack.min()), bad, r_grid, lhs, rhs)


def write_counting_table(path, profile: CountingProfile, r_values, alpha: float, m: int = 0,
                         extrapolate: bool = False) -> None:
    """CSV of ``(r, n(r), beta(r), ln r * n(r) / r^alpha)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "n", "beta", "log_ratio"])
        for r in r_values:
            n = int(profile(r))
            b = beta_integral(profile, r, alpha, m, extrapolate=extrapolate).value
            w.writerow([repr(float(r)), n, repr(b), repr(math.log(r) * n / r ** alpha)])
