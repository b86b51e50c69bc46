"""Sector contours, resolvents and the regularized contour integral.

The contour lives in the plane of the resolvent parameter ``lambda``:

* an inner arc ``|lambda| = r0`` with ``|arg lambda| <= phi``,
* two rays ``arg lambda = -phi`` (outward) and ``+phi`` (inward),
* closing arcs ``|lambda| = R~_nu``.

``phi = theta + epsilon`` is the sector opening. Every closed path here is
counterclockwise around the region it bounds. :func:`contour_integral`
returns ``-(1/2 pi i)`` times the counterclockwise integral, which is the
normalization under which a loop around ``1/mu`` reproduces the spectral
projector term of ``mu`` with a positive sign.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ContourProximityError, QuadratureError, ValidationError
from .operator_lab import SectorSpec
from .spectral import as_matrix, numerical_range_max_arg

ORIENTATION = "counterclockwise; integral normalized by -1/(2 pi i)"
GAUSS_ORDER = 32
MAX_DEPTH = 12
EPS = float(np.finfo(float).eps)
_GX, _GW = np.polynomial.legendre.leggauss(GAUSS_ORDER)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW


@dataclass(frozen=True)
class Segment:
    """Arc ``radius * exp(i a)`` for ``a`` from ``a0`` to ``a1``, or a ray at
    angle ``angle`` from ``r_start`` to ``r_end`` (geometric radial map)."""

    kind: str
    radius: float = 0.0
    a0: float = 0.0
    a1: float = 0.0
    angle: float = 0.0
    r_start: float = 0.0
    r_end: float = 0.0

    def point(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "arc":
            return self.radius * np.exp(1j * (self.a0 + (self.a1 - self.a0) * s))
        r = self.r_start * (self.r_end / self.r_start) ** s
        return r * np.exp(1j * self.angle)

    def derivative(self, s):
        lam = self.point(s)
        if self.kind == "arc":
            return 1j * (self.a1 - self.a0) * lam
        return math.log(self.r_end / self.r_start) * lam

    @property
    def start(self) -> complex:
        return complex(self.point(0.0))

    @property
    def end(self) -> complex:
        return complex(self.point(1.0))

    @property
    def infinite(self) -> bool:
        return self.kind == "ray" and not np.isfinite(self.r_end if self.r_end > self.r_start else self.r_start)

    def distance(self, z: complex) -> float:
        """Euclidean distance from ``z`` to the segment."""
        if self.kind == "arc":
            lo, hi = sorted((self.a0, self.a1))
            a = np.angle(z)
            if lo <= a <= hi:
                return abs(abs(z) - self.radius)
            return float(min(abs(z - self.radius * np.exp(1j * lo)), abs(z - self.radius * np.exp(1j * hi))))
        u = np.exp(1j * self.angle)
        lo, hi = sorted((self.r_start, self.r_end))
        proj = float(np.clip((z * np.conj(u)).real, lo, hi))
        return abs(z - proj * u)

    def to_dict(self) -> dict:
        if self.kind == "arc":
            return {"kind": "arc", "radius": self.radius, "a0": self.a0, "a1": self.a1}
        return {"kind": "ray", "angle": self.angle, "r_start": self.r_start, "r_end": self.r_end}


def arc(radius: float, a0: float, a1: float) -> Segment:
    return Segment("arc", radius=float(radius), a0=float(a0), a1=float(a1))


def ray(angle: float, r_start: float, r_end: float) -> Segment:
    return Segment("ray", angle=float(angle), r_start=float(r_start), r_end=float(r_end))


@dataclass(frozen=True)
class ContourPath:
    segments: tuple
    phi: float
    radii: tuple = ()  # r0 followed by the R~ values
    orientation: str = ORIENTATION

    @property
    def closed(self) -> bool:
        return not any(s.infinite for s in self.segments)

    def connection_gap(self) -> float:
        """Largest mismatch between consecutive finite endpoints."""
        segs = self.segments
        gaps = []
        for a, b in zip(segs, segs[1:] + segs[:1]):
            if a.infinite or b.infinite:
                continue
            gaps.append(abs(a.end - b.start))
        return max(gaps) if gaps else 0.0

    def ring(self, nu: int) -> "ContourPath":
        """Closed boundary of ``R~_{nu-1} < |lambda| < R~_nu`` (``R~_{-1} = r0``)."""
        if not 0 <= nu < len(self.radii) - 1:
            raise ValidationError(f"ring {nu} does not exist")
        return closed_sector_loop(self.radii[nu], self.radii[nu + 1], self.phi)

    @property
    def n_rings(self) -> int:
        return max(len(self.radii) - 1, 0)

    def nodes(self, order: int = GAUSS_ORDER):
        """Fixed (non-adaptive) Gauss nodes and complex weights, with segment ids."""
        x, w = np.polynomial.legendre.leggauss(order)
        x, w = 0.5 * (x + 1), 0.5 * w
        ids, lam, wt = [], [], []
        for k, seg in enumerate(self.segments):
            if seg.infinite:
                continue
            ids.append(np.full(order, k))
            lam.append(seg.point(x))
            wt.append(w * seg.derivative(x))
        return np.concatenate(ids), np.concatenate(lam), np.concatenate(wt)

    def to_dict(self) -> dict:
        return {"phi": self.phi, "radii": list(self.radii), "orientation": self.orientation,
                "segments": [s.to_dict() for s in self.segments]}


def closed_sector_loop(a: float, b: float, phi: float) -> ContourPath:
    """Counterclockwise boundary of ``{a < |lambda| < b, |arg lambda| < phi}``."""
    if not 0 < a < b:
        raise ValidationError("loop radii must satisfy 0 < a < b")
    segs = (ray(-phi, a, b), arc(b, -phi, phi), ray(phi, b, a), arc(a, phi, -phi))
    return ContourPath(segs, float(phi), (float(a), float(b)))


def build_contour(sector: SectorSpec, r0: float, R_tilde: Sequence[float] = (),
                  char_numbers=None) -> ContourPath:
    """Inner arc at ``r0``, rays at ``+-(theta+epsilon)`` and closing arcs at ``R_tilde``.

    With ``R_tilde`` empty the rays run to infinity. Rays are cut at each
    ``R~`` so that ring boundaries share their pieces.
    """
    phi = sector.opening
    R_tilde = [float(r) for r in R_tilde]
    if r0 <= 0:
        raise ValidationError("r0 must be positive")
    if any(b <= a for a, b in zip([r0] + R_tilde, R_tilde)):
        raise ValidationError("R_tilde must be ascending and above r0")
    if char_numbers is not None and len(char_numbers):
        cmin = float(np.min(np.abs(char_numbers)))
        if r0 >= cmin:
            raise ValidationError(f"r0={r0:.6g} must be below the smallest characteristic modulus {cmin:.6g}")
    radii = [float(r0)] + R_tilde
    if not R_tilde:
        segs = (ray(-phi, r0, math.inf), ray(phi, math.inf, r0), arc(r0, phi, -phi))
        return ContourPath(segs, phi, (float(r0),))
    out = [ray(-phi, a, b) for a, b in zip(radii, radii[1:])]
    out.append(arc(radii[-1], -phi, phi))
    out += [ray(phi, b, a) for a, b in reversed(list(zip(radii, radii[1:])))]
    out.append(arc(r0, phi, -phi))
    return ContourPath(tuple(out), phi, tuple(radii))


def winding_number(path: ContourPath, z: complex) -> float:
    """``(1/2 pi i) \\oint d lambda / (lambda - z)`` by the path's Gauss rule."""
    total = 0j
    for seg in path.segments:
        total += _adaptive(lambda lam: 1.0 / (lam - z), seg, 1e-12)[0]
    return float((total / (2j * math.pi)).real)


# ---------------------------------------------------------------- resolvent


def resolvent_apply(B, lam: complex, f) -> np.ndarray:
    """Solve ``(I - lam B) x = f``."""
    A = as_matrix(B)
    f = np.asarray(f, dtype=complex)
    if lam == 0:
        return f.copy()
    ev = np.linalg.eigvals(A)
    gap = np.abs(ev - 1.0 / lam)
    k = int(np.argmin(gap))
    if gap[k] <= 1e-10 * max(1.0, abs(ev[k])):
        raise ContourProximityError(f"1/lambda={1 / lam:.6g} is within {gap[k]:.2e} of eigenvalue {ev[k]:.6g}")
    M = np.eye(A.shape[0]) - lam * A
    try:
        x = np.linalg.solve(M, f)
    except np.linalg.LinAlgError as exc:
        raise ContourProximityError(f"singular system at lambda={lam:.6g}; nearest eigenvalue {ev[k]:.6g}") from exc
    res = np.linalg.norm(M @ x - f)
    if res > 1e-10 * (np.linalg.norm(f) + np.linalg.norm(x) * np.linalg.norm(M, 2)):
        raise ContourProximityError(f"residual {res:.2e} at lambda={lam:.6g}; nearest eigenvalue {ev[k]:.6g}")
    return x


def _power(lam, alpha):
    return np.exp(alpha * np.log(lam))  # principal branch


def _integrand(A: np.ndarray, f: np.ndarray, alpha: float, t: float):
    n = A.shape[0]
    eye = np.eye(n)

    def F(lam):
        lam = np.atleast_1d(lam)
        M = eye[None] - lam[:, None, None] * A[None]
        rhs = np.broadcast_to(f, (lam.size, n))[..., None]
        X = np.linalg.solve(M, rhs)
        # one refinement step with the residual in extended precision
        Ml = eye[None] - lam.astype(np.clongdouble)[:, None, None] * A.astype(np.clongdouble)[None]
        R = (rhs - Ml @ X.astype(np.clongdouble)).astype(complex)
        X = (X + np.linalg.solve(M, R))[..., 0]
        return np.exp(-_power(lam, alpha) * t)[:, None] * (X @ A.T)

    return F


def _rule(F, seg: Segment, u: float, v: float):
    """Gauss rule on ``[u, v]``: ``(value, L1 mass)``; the mass sets the round-off floor."""
    s = u + (v - u) * _GX
    vals = F(seg.point(s))
    w = (v - u) * _GW * seg.derivative(s)
    mass = float(np.dot(np.abs(w), np.abs(vals).max(axis=-1) if vals.ndim > 1 else np.abs(vals)))
    val = np.tensordot(w, vals, axes=(0, 0)) if vals.ndim > 1 else np.dot(w, vals)
    return val, mass


def _adaptive(F, seg: Segment, tol: float, noise: float = EPS):
    """Adaptive bisection of the Gauss rule on ``[0, 1]``; returns ``(value, err, depth)``.

    Intervals are refined until their halves agree with the whole to
    ``tol * width`` (or a round-off floor of ``1e3 * noise`` times their
    mass, ``noise`` being the relative error of one integrand value), or
    the depth limit is reached. ``err`` sums the accepted differences and
    is ``inf`` when it exceeds ``tol`` plus the round-off floor; the floor
    itself is returned as the last entry.
    """
    stack = [(0.0, 1.0, _rule(F, seg, 0.0, 1.0)[0], 0)]
    total, err, floor, deepest = 0, 0.0, 0.0, 0
    while stack:
        u, v, whole, depth = stack.pop()
        mid = 0.5 * (u + v)
        (left, m1), (right, m2) = _rule(F, seg, u, mid), _rule(F, seg, mid, v)
        diff = float(np.max(np.abs(left + right - whole)))
        noise_floor = 1e3 * noise * (m1 + m2)
        local = max(tol * (v - u), noise_floor)
        if diff <= local or depth >= MAX_DEPTH:
            err += diff
            floor += noise_floor
            total = total + left + right
            deepest = max(deepest, depth + 1)
        else:
            stack.append((mid, v, right, depth + 1))
            stack.append((u, mid, left, depth + 1))
    return total, (err if err <= tol + floor else math.inf), deepest, floor


def segment_noise(A: np.ndarray, seg: Segment, samples: int = 17) -> float:
    """Relative error of one solve on ``seg``: ``eps`` times the largest sampled ``cond(I - lambda B)``."""
    eye = np.eye(A.shape[0])
    worst = 1.0
    for lam in seg.point(np.linspace(0.0, 1.0, samples)):
        sv = np.linalg.svd(eye - lam * A, compute_uv=False)
        worst = max(worst, sv[0] / sv[-1])
    return EPS * worst


def truncation_radius(A: np.ndarray, seg: Segment, alpha: float, t: float, fnorm: float,
                      tol: float = 1e-14) -> float:
    """Radius beyond which the integrand norm on the ray is below ``tol / 10``.

    Uses ``|exp(-lambda^alpha t)| = exp(-t r^alpha cos(alpha phi))`` and the
    largest sampled ``||B (I - lambda B)^{-1}||`` along the ray.
    """
    c = math.cos(alpha * abs(seg.angle))
    if c <= 0:
        raise ValidationError("sector opening must stay below pi/(2 alpha)")
    r_fin = seg.r_start if np.isfinite(seg.r_start) else seg.r_end
    normB = np.linalg.norm(A, 2)
    eye = np.eye(A.shape[0])
    r = max(2.0 * r_fin, 1.0)
    while True:
        radii = np.geomspace(r_fin, r, 24)
        bound = 1.0
        for rr in radii:
            smin = np.linalg.svd(eye - rr * np.exp(1j * seg.angle) * A, compute_uv=False)[-1]
            bound = max(bound, 1.0 / smin)
        env = math.exp(-t * r ** alpha * c) * normB * bound * fnorm * r
        if env < tol / 10:
            return r
        r *= 2.0


@dataclass
class IntegralResult:
    value: np.ndarray
    error: float
    max_depth: int
    truncated_at: list = field(default_factory=list)
    noise_floor: float = 0.0  # accuracy limit set by cond(I - lambda B) along the path


def check_clearance(path: ContourPath, char_numbers, margin: float = 1e-8) -> None:
    for k, seg in enumerate(path.segments):
        for z in np.atleast_1d(char_numbers):
            d = seg.distance(complex(z))
            if d <= margin * max(1.0, abs(z)):
                raise ContourProximityError(
                    f"segment {k} ({seg.kind}) passes within {d:.2e} of characteristic number {z:.6g}"
                )


def contour_integral(B, f, path: ContourPath, alpha: float, t: float,
                     tol: float = 1e-9, detail: bool = False):
    """``-(1/2 pi i) \\oint exp(-lambda^alpha t) B (I - lambda B)^{-1} f d lambda``.

    Each segment is integrated by a 32-node Gauss rule with adaptive
    bisection until the two halves agree with the whole to ``tol * ||f||``.
    Infinite rays are cut where the integrand envelope is negligible.
    """
    if t <= 0 or alpha <= 0:
        raise ValidationError("t and alpha must be positive")
    if path.phi >= math.pi / (2 * alpha):
        raise ValidationError(f"sector constraint violated: phi={path.phi:.6g} >= pi/(2 alpha)")
    A = as_matrix(B)
    f = np.asarray(f, dtype=complex)
    fnorm = float(np.linalg.norm(f))
    out = IntegralResult(np.zeros(A.shape[0], dtype=complex), 0.0, 0)
    if fnorm == 0:
        return out if detail else out.value
    ev = np.linalg.eigvals(A)
    check_clearance(path, 1.0 / ev[np.abs(ev) > 0])
    F = _integrand(A, f, alpha, t)
    atol = tol * fnorm
    worst = None
    for k, seg in enumerate(path.segments):
        if seg.infinite:
            outward = np.isfinite(seg.r_start)
            rt = truncation_radius(A, seg, alpha, t, fnorm)
            seg = ray(seg.angle, seg.r_start, rt) if outward else ray(seg.angle, rt, seg.r_end)
            out.truncated_at.append(rt)
        val, err, depth, floor = _adaptive(F, seg, atol, segment_noise(A, seg))
        if not np.isfinite(err):
            worst = k
        out.value = out.value + val
        out.error += err
        out.max_depth = max(out.max_depth, depth)
        out.noise_floor += floor
    if worst is not None:
        raise QuadratureError(f"adaptive quadrature did not converge on segment {worst}", worst_segment=worst)
    out.value = -out.value / (2j * math.pi)
    out.error /= 2 * math.pi
    out.noise_floor /= 2 * math.pi
    return out if detail else out.value


def write_contour_dump(path_csv, path: ContourPath, order: int = GAUSS_ORDER) -> None:
    ids, lam, w = path.nodes(order)
    with open(path_csv, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["segment", "node_re", "node_im", "weight_re", "weight_im"])
        for i, z, ww in zip(ids, lam, w):
            wr.writerow([int(i), repr(z.real), repr(z.imag), repr(ww.real), repr(ww.imag)])


# ---------------------------------------------------------------- envelopes


@dataclass(frozen=True)
class RayBoundReport:
    skipped: bool
    diagnostic: str
    max_ratio: float
    points: int
    violations: int
    psi: float


def ray_bound_check(B, sector: SectorSpec, samples: int = 100, radii=None,
                    range_samples: int = 4000, seed: int = 42) -> RayBoundReport:
    """Check ``||(I - lambda B)^{-1}|| <= 1/sin(psi)`` on the rays ``arg lambda = +-(theta+eps)``.

    ``max_ratio`` is the largest ``norm * sin(psi)``; values near 1 mean the
    bound is sharp. The sectoriality precondition is tested by sampling the
    numerical range.
    """
    A = as_matrix(B)
    arg = numerical_range_max_arg(A, range_samples, seed)
    if arg > sector.theta + 1e-9:
        return RayBoundReport(True, f"sampled numerical range reaches arg {arg:.4g} > theta={sector.theta:.4g}",
                              math.nan, 0, 0, math.nan)
    phi = sector.opening
    psi = min(abs(phi - sector.theta), abs(phi + sector.theta))
    bound = 1.0 / math.sin(psi) if psi < math.pi / 2 else 1.0
    if radii is None:
        normB = max(np.linalg.norm(A, 2), 1e-300)
        radii = np.geomspace(1e-2 / normB, 1e3 / normB, samples // 2 + samples % 2)
    eye = np.eye(A.shape[0])
    ratios = []
    for sign in (1, -1):
        for r in radii:
            smin = np.linalg.svd(eye - r * np.exp(1j * sign * phi) * A, compute_uv=False)[-1]
            ratios.append((1.0 / smin) / bound)
    ratios = np.array(ratios[:samples]) if len(ratios) > samples else np.array(ratios)
    return RayBoundReport(False, "", float(ratios.max()), int(ratios.size),
                          int(np.sum(ratios > 1 + 1e-10)), psi)


@dataclass(frozen=True)
class ArcRingResult:
    ring: int
    radius: float
    max_norm: float
    log_envelope: float
    log_margin: float  # log_envelope - ln(max_norm)
    violations: int


def log_arc_envelope(r: float, alpha: float, profile, normB: float, delta_ring: float, delta0: float,
                     extrapolate: bool = False) -> float:
    """Logarithm of ``sum_{j<=m} (r ||B||)^j * exp(gamma(r) r^alpha)`` with ``m = floor(alpha)``."""
    from .counting import beta_transform

    m = int(math.floor(alpha))
    order = alpha / (m + 1)
    sig = (2 * math.e / (1 - delta0)) ** (m + 1)
    b1 = beta_transform(profile, r ** (m + 1), order, extrapolate=extrapolate).value
    b2 = beta_transform(profile, sig * r ** (m + 1), order, extrapolate=extrapolate).value
    gamma = b1 + (2 + math.log(4 * math.e / delta_ring)) * b2 * sig ** order
    poly = sum((r * normB) ** j for j in range(m + 1))
    return math.log(poly) + gamma * r ** alpha


def arc_bound_check(B, plan, alpha: float, counting_profile=None, radii=None,
                    phi: float = math.pi, n_angles: int = 65, extrapolate: bool = False) -> list:
    """Compare ``max ||(I - lambda B)^{-1}||`` on each arc ``|lambda| = R~_nu`` with the envelope.

    ``counting_profile`` defaults to the singular values of ``B^(m+1)``.
    Violations are counted, never raised.
    """
    from .counting import CountingProfile

    A = as_matrix(B)
    m = int(math.floor(alpha))
    if counting_profile is None:
        s = np.linalg.svd(np.linalg.matrix_power(A, m + 1), compute_uv=False)
        counting_profile = CountingProfile.from_singular_values(s)
    if radii is None:
        if plan.R_tilde is None:
            raise ValidationError("plan has no intermediate radii")
        radii = plan.R_tilde
    normB = float(np.linalg.norm(A, 2))
    eye = np.eye(A.shape[0])
    out = []
    for nu, r in enumerate(radii):
        env = log_arc_envelope(float(r), alpha, counting_profile, normB, plan.delta[nu], plan.delta[0], extrapolate)
        norms = []
        for a in np.linspace(-phi, phi, n_angles):
            smin = np.linalg.svd(eye - r * np.exp(1j * a) * A, compute_uv=False)[-1]
            norms.append(math.inf if smin == 0 else 1.0 / smin)
        norms = np.array(norms)
        mx = float(norms.max())
        with np.errstate(divide="ignore"):
            logn = np.log(norms)
        out.append(ArcRingResult(nu, float(r), mx, env, env - float(logn.max()),
                                 int(np.sum(logn > env))))
    return out
