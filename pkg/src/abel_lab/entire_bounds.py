"""Fredholm determinants, the function ``Delta(lambda)(I - lambda B)^{-1}`` and growth envelopes.

``Delta(lambda) = det(I - lambda B)`` is evaluated two ways: as the product
``prod (1 - lambda mu_n)`` over eigenvalues and as the principal-minor
series ``1 + sum_p (-lambda)^p E_p(B)``, where ``E_p`` sums the ``p x p``
principal minors.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .counting import CountingProfile, beta_transform
from .errors import ValidationError
from .spectral import as_matrix

FULL_EXPANSION_CAP = 12
DEBUG_TABLE_CAP = 6


def fredholm_det_product(B, lam) -> complex:
    """``prod_n (1 - lambda mu_n)`` with multiplicity."""
    mu = np.linalg.eigvals(as_matrix(B))
    return complex(np.prod(1.0 - complex(lam) * mu))


def principal_minor_sums(A: np.ndarray, order_cap: int) -> list:
    """``E_p`` for ``p = 1..order_cap``."""
    n = A.shape[0]
    return [sum(np.linalg.det(A[np.ix_(S, S)]) for S in itertools.combinations(range(n), p))
            for p in range(1, order_cap + 1)]


def fredholm_det_minors(B, lam, order_cap: Optional[int] = None) -> complex:
    """``1 + sum_{p<=order_cap} (-lambda)^p E_p(B)``.

    Terms stop early once ``(|lambda| sum s_n)^p / p!`` bounds the remainder
    below ``1e-16``.
    """
    A = as_matrix(B)
    n = A.shape[0]
    if order_cap is None:
        order_cap = n
    if not 0 <= order_cap <= n:
        raise ValidationError("order_cap must lie in [0, dim]")
    if order_cap > FULL_EXPANSION_CAP:
        raise ValidationError(f"expansion to order {order_cap} needs dim <= {FULL_EXPANSION_CAP}; pass a smaller order_cap")
    lam = complex(lam)
    acc = 1.0 + 0j
    if lam == 0:
        return acc
    trace_norm = float(np.sum(np.linalg.svd(A, compute_uv=False)))
    for p in range(1, order_cap + 1):
        if (abs(lam) * trace_norm) ** p / math.factorial(p) < 1e-16 * max(1.0, abs(acc)):
            break
        Ep = sum(np.linalg.det(A[np.ix_(S, S)]) for S in itertools.combinations(range(n), p))
        acc += (-lam) ** p * Ep
    return complex(acc)


def canonical_upper(B, lam) -> float:
    """``prod (1 + |lambda| s_n(B))``."""
    s = np.linalg.svd(as_matrix(B), compute_uv=False)
    return float(np.prod(1.0 + abs(lam) * s))


@dataclass(frozen=True)
class DeterminantProfile:
    eigenvalues: np.ndarray
    singular_values: np.ndarray
    delta: Optional[np.ndarray] = None

    @classmethod
    def of(cls, B, delta=None) -> "DeterminantProfile":
        A = as_matrix(B)
        return cls(np.linalg.eigvals(A), np.linalg.svd(A, compute_uv=False),
                   None if delta is None else np.asarray(delta, dtype=float))

    def det(self, lam) -> complex:
        return complex(np.prod(1.0 - complex(lam) * self.eigenvalues))

    def upper(self, lam) -> float:
        return float(np.prod(1.0 + abs(lam) * self.singular_values))

    @property
    def varpi(self) -> float:
        if self.delta is None:
            raise ValidationError("ring widths are required for varpi")
        return 2 * math.e / (1 - self.delta[0])


# ---------------------------------------------------------------- von Koch


@dataclass(frozen=True)
class VonKochReport:
    dims: tuple
    trace_sums: tuple  # sum |b_nn|
    hs_sums: tuple  # sum |b_nm|^2
    trace_saturates: bool
    hs_saturates: bool


def _saturates(sums) -> bool:
    d = np.diff(np.asarray(sums, dtype=float))
    return bool(d.size < 2 or np.all(np.diff(d) < 0))


def von_koch_diagnostics(B: Union[np.ndarray, Callable[[int], np.ndarray]],
                         dims: Sequence[int] = (16, 32, 64)) -> VonKochReport:
    """Trace-class and Hilbert-Schmidt proxies over nested truncations.

    ``B`` is either a matrix (leading principal blocks are used) or a
    callable returning the truncation of a given size. A sum saturates when
    its increments between consecutive truncations shrink.
    """
    tr, hs = [], []
    for n in dims:
        if callable(B):
            A = as_matrix(B(n))
        else:
            A = as_matrix(B)
            if n > A.shape[0]:
                raise ValidationError(f"truncation {n} exceeds dimension {A.shape[0]}")
            A = A[:n, :n]
        tr.append(float(np.sum(np.abs(np.diag(A)))))
        hs.append(float(np.sum(np.abs(A) ** 2)))
    return VonKochReport(tuple(dims), tuple(tr), tuple(hs), _saturates(tr), _saturates(hs))


# ---------------------------------------------------------------- D function


def d_function(B, lam) -> np.ndarray:
    """``Delta(lambda) (I - lambda B)^{-1}``, i.e. the adjugate of ``I - lambda B``."""
    A = as_matrix(B)
    M = np.eye(A.shape[0]) - complex(lam) * A
    U, s, Vh = np.linalg.svd(M)
    # adj(M) = det(M) M^{-1}, written through the SVD so it stays finite at singular M
    phase = np.linalg.det(U) * np.linalg.det(Vh)
    prods = np.array([np.prod(np.delete(s, i)) for i in range(s.size)])
    return phase * (Vh.conj().T * prods) @ U.conj().T


@dataclass(frozen=True)
class DBoundReport:
    points: int
    violations: list  # lambda values where ||D|| > 2 prod(1 + |lambda mu_n|)
    max_ratio: float
    envelope_violations: list  # lambda values where prod(1 + |lambda| s_n) > exp(integral bound)
    max_envelope_log_gap: float


def d_function_bound_check(B, lam_grid, profile: Optional[CountingProfile] = None,
                           s_order: float = 1.0) -> DBoundReport:
    """Check ``||D(lambda)|| <= 2 prod(1 + |lambda mu_n|)`` and the canonical-product envelope.

    The envelope is ``ln prod(1 + r s_n) <= beta(r) r^s_order`` with ``beta``
    built from the counting profile of ``1/s_n``; at finite rank
    ``beta(r) r^s`` does not depend on ``s_order``.
    """
    A = as_matrix(B)
    mu = np.linalg.eigvals(A)
    sv = np.linalg.svd(A, compute_uv=False)
    if profile is None:
        profile = CountingProfile.from_singular_values(sv)
    bad, ratios, env_bad, gaps = [], [], [], []
    for lam in np.atleast_1d(lam_grid):
        lam = complex(lam)
        norm = float(np.linalg.norm(d_function(A, lam), 2))
        bound = 2.0 * float(np.prod(1.0 + np.abs(lam * mu)))
        ratios.append(norm / bound)
        if norm > bound * (1 + 1e-12):
            bad.append(lam)
        r = abs(lam)
        lhs = float(np.sum(np.log1p(r * sv)))
        rhs = beta_transform(profile, r, s_order, extrapolate=False).value * r ** s_order if r > 0 else 0.0
        gaps.append(lhs - rhs)
        if lhs > rhs + 1e-12 * max(1.0, rhs):
            env_bad.append(lam)
    return DBoundReport(len(ratios), bad, float(max(ratios)), env_bad, float(max(gaps)))


# ---------------------------------------------------------------- lower bound


@dataclass(frozen=True)
class CartanReport:
    samples: int
    satisfied: int
    fraction: float
    worst_log_margin: float  # min over samples of ln|Delta| - ln(lower bound)
    near_violations: int  # violations within the exclusion margin of a modulus
    far_violations: int


def log_cartan_lower(r: float, profile: CountingProfile, s_order: float, delta_ring: float,
                     delta0: float) -> float:
    """``-(2 + ln(4e/delta_nu)) beta(varpi r) (varpi r)^s`` with ``varpi = 2e/(1-delta_0)``."""
    w = 2 * math.e / (1 - delta0)
    b = beta_transform(profile, w * r, s_order, extrapolate=False).value
    return -(2 + math.log(4 * math.e / delta_ring)) * b * (w * r) ** s_order


def cartan_lower_check(B, plan, n_angles: int = 64, s_order: float = 1.0, radii=None,
                       near_factor: float = 1e-3) -> CartanReport:
    """Compare ``|Delta(lambda)|`` on the circles ``|lambda| = R~_nu`` with the lower envelope.

    The counting profile is that of the characteristic-number moduli of
    ``B``. A violation counts as near when the circle is within
    ``near_factor * delta_nu * R_nu`` of such a modulus.
    """
    A = as_matrix(B)
    mu = np.linalg.eigvals(A)
    mu = mu[np.abs(mu) > 0]
    chars = np.sort(1.0 / np.abs(mu))
    profile = CountingProfile.from_thresholds(chars)
    if radii is None:
        if plan.R_tilde is None:
            raise ValidationError("plan has no intermediate radii")
        radii = plan.R_tilde
    angles = 2 * math.pi * np.arange(n_angles) / n_angles
    total = ok = near = far = 0
    worst = math.inf
    for nu, r in enumerate(radii):
        low = log_cartan_lower(float(r), profile, s_order, plan.delta[nu], plan.delta[0])
        is_near = bool(chars.size and np.min(np.abs(chars - r)) < near_factor * plan.delta[nu] * plan.R[nu])
        for a in angles:
            lam = r * np.exp(1j * a)
            val = np.abs(np.prod(1.0 - lam * mu))
            logd = math.log(val) if val > 0 else -math.inf
            total += 1
            worst = min(worst, logd - low)
            if logd >= low:
                ok += 1
            elif is_near:
                near += 1
            else:
                far += 1
    return CartanReport(total, ok, ok / total if total else 1.0, worst, near, far)


# ---------------------------------------------------------------- debug table


def delta_lm_table(B, lam) -> np.ndarray:
    """Entries ``Delta^{lm}(lambda)`` of ``Delta(lambda)(I - lambda B)^{-1}`` by explicit cofactors.

    Only for ``dim <= 6``.
    """
    A = as_matrix(B)
    n = A.shape[0]
    if n > DEBUG_TABLE_CAP:
        raise ValidationError(f"cofactor table is limited to dim <= {DEBUG_TABLE_CAP}")
    M = np.eye(n) - complex(lam) * A
    out = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(M, j, axis=0), i, axis=1)
            out[i, j] = (-1) ** (i + j) * (np.linalg.det(minor) if minor.size else 1.0)
    return out


def write_determinant_csv(path, B, lam_grid, plan=None, s_order: float = 1.0, ring: int = 0) -> None:
    """Rows ``(lambda re, lambda im, |Delta| product, |Delta| minors, upper, lower, pass flags)``."""
    A = as_matrix(B)
    prof = DeterminantProfile.of(A)
    minors_ok = A.shape[0] <= FULL_EXPANSION_CAP
    chars = np.sort(1.0 / np.abs(prof.eigenvalues[np.abs(prof.eigenvalues) > 0]))
    cprof = CountingProfile.from_thresholds(chars)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lam_re", "lam_im", "abs_det_product", "abs_det_minors", "upper", "lower",
                    "upper_ok", "lower_ok"])
        for lam in np.atleast_1d(lam_grid):
            lam = complex(lam)
            dp = abs(prof.det(lam))
            dm = abs(fredholm_det_minors(A, lam)) if minors_ok else math.nan
            up = prof.upper(lam)
            if plan is not None and abs(lam) > 0:
                low = math.exp(log_cartan_lower(abs(lam), cprof, s_order, plan.delta[ring], plan.delta[0]))
            else:
                low = math.nan
            w.writerow([repr(lam.real), repr(lam.imag), repr(dp), repr(dm), repr(up), repr(low),
                        int(dp <= up * (1 + 1e-12)), int(not (dp < low))])
