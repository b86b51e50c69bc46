"""Gap-separated groups of characteristic numbers, ring radii and splits.

Characteristic-number moduli ``mu_1 <= mu_2 <= ...`` are grouped by a gap
law: a group closes after ``mu_n`` when

    mu_{n+1} - mu_n >= K mu_n^(1 - order_exp).

Each group boundary ``mu_b`` carries a ring ``(1-delta) R < |lambda| < R``
with ``R = K mu_b^(1-order_exp) + mu_b`` and ``1/delta = 1 + mu_b^order_exp / K``,
so ``R (1 - delta) = mu_b`` and the ring lies in the eigenvalue-free gap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import NotPowerRegularError, RingTooCrowdedError, ValidationError
from .spectral import RootSystem, as_matrix

MARGIN_FACTOR = 1e-3


def ring_parameters(mu_boundary: float, K: float, order_exp: float):
    """Outer radius ``R`` and relative width ``delta`` of the ring at ``mu_boundary``."""
    if np.any(np.asarray(mu_boundary) <= 0) or K <= 0 or order_exp <= 0:
        raise ValidationError("ring parameters must be positive")
    R = K * mu_boundary ** (1 - order_exp) + mu_boundary
    delta = 1.0 / (1.0 + mu_boundary ** order_exp / K)
    return R, delta


@dataclass(frozen=True)
class ClusterPlan:
    """Groups of characteristic-number moduli and their rings.

    Group ``nu`` (0-based) holds ``mu[N[nu]:N[nu+1]]``; ring ``nu`` sits just
    above its largest modulus ``mu[N[nu+1]-1]``.
    """

    mu: np.ndarray
    N: tuple
    K: float
    order_exp: float
    R: np.ndarray
    delta: np.ndarray
    R_tilde: Optional[np.ndarray] = None

    @property
    def n_groups(self) -> int:
        return len(self.N) - 1

    def group(self, nu: int) -> np.ndarray:
        return self.mu[self.N[nu]:self.N[nu + 1]]

    def sizes(self) -> list:
        return [self.N[i + 1] - self.N[i] for i in range(self.n_groups)]

    def boundary_moduli(self) -> np.ndarray:
        return np.array([self.mu[n - 1] for n in self.N[1:]])

    def inner_radius(self) -> float:
        return 0.5 * float(self.mu[0])

    def margin(self, nu: int) -> float:
        return MARGIN_FACTOR * self.delta[nu] * self.R[nu]

    def with_radii(self, radii) -> "ClusterPlan":
        radii = np.asarray(radii, dtype=float)
        if radii.shape != (self.n_groups,):
            raise ValidationError("one intermediate radius per ring is required")
        return replace(self, R_tilde=radii)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "order_exp": self.order_exp,
            "mu": self.mu.tolist(),
            "N": list(self.N),
            "R": self.R.tolist(),
            "delta": self.delta.tolist(),
            "R_tilde": None if self.R_tilde is None else self.R_tilde.tolist(),
        }


def find_gap_subsequence(mu_abs, K: float, order_exp: float) -> ClusterPlan:
    """Greedy scan from the smallest modulus, closing a group wherever the gap law holds.

    The last modulus always closes the final group.
    """
    mu = np.asarray(mu_abs, dtype=float)
    if mu.ndim != 1 or mu.size == 0:
        raise ValidationError("mu_abs must be a nonempty 1-d sequence")
    if np.any(mu <= 0):
        raise ValidationError("moduli must be strictly positive")
    if np.any(np.diff(mu) < 0):
        raise ValidationError("moduli must be ascending")
    if K <= 0 or order_exp <= 0:
        raise ValidationError("K and order_exp must be positive")
    gaps = np.diff(mu)
    law = K * mu[:-1] ** (1 - order_exp)
    N = [0] + [int(i) + 1 for i in np.flatnonzero(gaps >= law)] + [mu.size]
    bounds = mu[np.array(N[1:]) - 1]
    R, delta = ring_parameters(bounds, K, order_exp)
    return ClusterPlan(mu, tuple(N), float(K), float(order_exp), np.atleast_1d(R), np.atleast_1d(delta))


def plan_from_root_system(rs: RootSystem, K: float, order_exp: float) -> ClusterPlan:
    """Plan over characteristic-number moduli counted with algebraic multiplicity."""
    mods = np.sort(np.concatenate([np.full(c.length, abs(c.char_number)) for c in rs.chains]))
    return find_gap_subsequence(mods, K, order_exp)


def chain_groups(rs: RootSystem, plan: ClusterPlan) -> list:
    """Chain indices of each group, in the chain order of ``rs``."""
    edges = plan.boundary_moduli()
    out = [[] for _ in range(plan.n_groups)]
    for idx, c in enumerate(rs.chains):
        m = abs(c.char_number)
        nu = int(np.searchsorted(edges, m * (1 - 1e-12), side="left"))
        out[min(nu, plan.n_groups - 1)].append(idx)
    for nu, idxs in enumerate(out):
        if sum(rs.chains[i].length for i in idxs) != plan.sizes()[nu]:
            raise ValidationError(f"group {nu}: chain multiplicities do not match the plan")
    return out


def ring_nesting_ok(plan: ClusterPlan) -> bool:
    inner = plan.R * (1 - plan.delta)
    return bool(np.all(plan.R[:-1] < inner[1:]))


# ---------------------------------------------------------------- radii


@dataclass(frozen=True)
class RadiusChoice:
    radius: float
    max_norm: float
    worst_norm: float
    candidates: np.ndarray
    norms: np.ndarray  # nan where excluded by the margin


def arc_nodes(radius: float, phi: float, n_angles: int) -> np.ndarray:
    return radius * np.exp(1j * np.linspace(-phi, phi, n_angles))


def max_resolvent_norm(A: np.ndarray, lams) -> float:
    """``max ||(I - lambda A)^{-1}||_2`` over ``lams``."""
    eye = np.eye(A.shape[0])
    worst = 0.0
    for lam in np.atleast_1d(lams):
        smin = np.linalg.svd(eye - lam * A, compute_uv=False)[-1]
        worst = max(worst, np.inf if smin == 0 else 1.0 / smin)
    return worst


def choose_intermediate_radius(plan: ClusterPlan, B, ring_index: int, samples: int = 32,
                               phi: float = math.pi / 2, n_angles: int = 33,
                               margin: Optional[float] = None) -> RadiusChoice:
    """Radius in ring ``ring_index`` minimizing the largest resolvent norm on the arc.

    Candidates are spread over the open ring; those closer than ``margin``
    to a characteristic-number modulus of ``B`` are dropped.
    """
    if not 0 <= ring_index < plan.n_groups:
        raise ValidationError(f"ring index {ring_index} out of range")
    A = as_matrix(B)
    R, d = plan.R[ring_index], plan.delta[ring_index]
    lo = R * (1 - d)
    cand = lo + (R - lo) * (np.arange(1, samples + 1) / (samples + 1))
    if margin is None:
        margin = plan.margin(ring_index)
    ev = np.linalg.eigvals(A)
    mods = np.concatenate([plan.mu, 1.0 / np.abs(ev[np.abs(ev) > 0])])
    dist = np.min(np.abs(cand[:, None] - mods[None, :]), axis=1)
    ok = dist >= margin
    if not ok.any():
        raise RingTooCrowdedError(
            f"ring {ring_index}: every candidate radius lies within {margin:.3g} of a modulus; increase K"
        )
    norms = np.full(cand.size, np.nan)
    for i in np.flatnonzero(ok):
        norms[i] = max_resolvent_norm(A, arc_nodes(cand[i], phi, n_angles))
    best = int(np.nanargmin(norms))
    return RadiusChoice(float(cand[best]), float(norms[best]), float(np.nanmax(norms)), cand, norms)


def choose_all_radii(plan: ClusterPlan, B, **kwargs) -> ClusterPlan:
    radii = [choose_intermediate_radius(plan, B, nu, **kwargs).radius for nu in range(plan.n_groups)]
    return plan.with_radii(radii)


# ---------------------------------------------------------------- splitting


@dataclass(frozen=True)
class SplitPlan:
    """Allocation of each group's size among sub-operators ``B_1, B_2, ...``.

    ``counts[nu-1][k-1]`` is the number of indices of group ``nu`` given to
    ``B_k``; ``counts[nu-1][0]`` is the remainder ``N'_nu`` for ``B_1``.
    """

    gamma: int
    beta_exp: int
    eta_inv: int
    sizes: tuple
    C: tuple
    counts: tuple
    v: dict
    sandwich_lower: tuple
    sandwich_upper: tuple
    remainder_ratio: tuple  # N'_nu / nu^(gamma-1)

    @property
    def n_sub(self) -> int:
        return max(len(row) for row in self.counts)

    @property
    def remainders(self) -> list:
        return [row[0] for row in self.counts]

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma, "beta_exp": self.beta_exp, "eta_inv": self.eta_inv,
            "sizes": list(self.sizes), "C": list(self.C),
            "counts": [list(r) for r in self.counts],
            "v": {str(k): v for k, v in self.v.items()},
            "sandwich_lower": list(self.sandwich_lower),
            "sandwich_upper": list(self.sandwich_upper),
            "remainder_ratio": list(self.remainder_ratio),
        }


def start_cluster(k: int, eta_inv: int) -> int:
    """Smallest ``nu`` with ``nu^eta_inv >= k``."""
    nu = max(1, int(math.floor(k ** (1.0 / eta_inv))))
    while nu ** eta_inv < k:
        nu += 1
    while nu > 1 and (nu - 1) ** eta_inv >= k:
        nu -= 1
    return nu


def split_counting(sizes: Sequence[int], gamma: int, beta_exp: int, eta_inv: int,
                   window: Optional[tuple] = (0.01, 100.0)) -> SplitPlan:
    """Split group sizes ``n_nu`` (``nu = 1, 2, ...``) among sub-operators.

    For ``k >= 2`` group ``nu`` gives ``C_nu (nu^beta - k^(beta/eta_inv))`` (rounded)
    indices to ``B_k`` (when positive) with ``C_nu = n_nu / ((nu+1)^gamma beta/gamma)``;
    ``B_1`` takes the remainder. ``window`` bounds ``n_nu / nu^gamma``.
    """
    for name, val, low in (("gamma", gamma, 2), ("beta_exp", beta_exp, 1), ("eta_inv", eta_inv, 1)):
        if int(val) != val or val < low:
            raise ValidationError(f"{name} must be an integer >= {low}")
    gamma, beta_exp, eta_inv = int(gamma), int(beta_exp), int(eta_inv)
    if gamma != beta_exp + eta_inv:
        raise ValidationError("gamma must equal beta_exp + eta_inv")
    sizes = tuple(int(n) for n in sizes)
    if any(n < 0 for n in sizes):
        raise ValidationError("group sizes must be nonnegative")
    if window is not None:
        for nu, n in enumerate(sizes, start=1):
            ratio = n / nu ** gamma
            if not window[0] <= ratio <= window[1]:
                raise NotPowerRegularError(
                    f"n_{nu}/nu^{gamma} = {ratio:.4g} outside [{window[0]}, {window[1]}]"
                )
    eta_gamma = gamma / eta_inv
    p = beta_exp / eta_inv
    C, counts, lower, upper, ratio = [], [], [], [], []
    v = {}
    for nu, n in enumerate(sizes, start=1):
        c = n / ((nu + 1) ** gamma * beta_exp / gamma)
        kmax = nu ** eta_inv
        row = [0] * max(kmax, 1)
        for k in range(2, kmax + 1):
            row[k - 1] = int(round(c * max(0.0, nu ** beta_exp - k ** p)))
        excess = sum(row) - n
        for k in range(len(row) - 1, 0, -1):  # rounding guard
            if excess <= 0:
                break
            take = min(excess, row[k])
            row[k] -= take
            excess -= take
        row[0] = n - sum(row[1:])
        for k in range(2, kmax + 1):
            v.setdefault(k, start_cluster(k, eta_inv))
        s = sum(k ** p for k in range(1, kmax + 1))
        lower.append(bool(nu ** gamma / eta_gamma + beta_exp / gamma <= s * (1 + 1e-12)))
        upper.append(bool(s <= ((nu + 1) ** gamma - 1) / eta_gamma * (1 + 1e-12)))
        C.append(c)
        counts.append(tuple(row))
        ratio.append(row[0] / nu ** (gamma - 1))
    return SplitPlan(gamma, beta_exp, eta_inv, sizes, tuple(C), tuple(counts), v,
                     tuple(lower), tuple(upper), tuple(ratio))


@dataclass(frozen=True)
class SubOperator:
    k: int
    chain_indices: tuple
    basis: np.ndarray  # orthonormal columns spanning the assigned chains
    matrix: np.ndarray  # compression basis^* B basis

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix) if self.matrix.size else np.zeros(0, dtype=complex)


def assign_suboperators(B, rs: RootSystem, plan: ClusterPlan, split: SplitPlan) -> list:
    """Distribute chains among sub-operators and compress ``B`` to each span.

    Inside each group chains are taken in ascending modulus and handed to
    ``B_2, B_3, ...`` until their quotas are met; ``B_1`` receives the rest.
    A chain is never split, so quotas are met exactly only when chain
    lengths allow it. Empty sub-operators are dropped.
    """
    if tuple(plan.sizes()) != tuple(split.sizes):
        raise ValidationError("split plan sizes do not match the cluster plan")
    A = as_matrix(B)
    groups = chain_groups(rs, plan)
    owned: dict = {}
    for nu, idxs in enumerate(groups):
        idxs = sorted(idxs, key=lambda i: (abs(rs.chains[i].char_number), np.angle(rs.chains[i].char_number)))
        row = split.counts[nu]
        order = list(range(2, len(row) + 1)) + [1]
        quota = {k: row[k - 1] for k in order}
        pos = 0
        for i in idxs:
            while pos < len(order) - 1 and quota[order[pos]] <= 0:
                pos += 1
            k = order[pos]
            owned.setdefault(k, []).append(i)
            quota[k] -= rs.chains[i].length
    seen = sorted(i for v in owned.values() for i in v)
    if seen != list(range(len(rs.chains))):
        raise ValidationError("chain assignment is not a partition")
    subs = []
    for k in sorted(owned):
        idx = tuple(owned[k])
        V = np.hstack([rs.chains[i].vectors for i in idx])
        Q, _ = np.linalg.qr(V)
        subs.append(SubOperator(k, idx, Q, Q.conj().T @ A @ Q))
    return subs


def export_plans(path, plan: ClusterPlan, split: Optional[SplitPlan] = None, subs=None) -> None:
    doc = {"cluster_plan": plan.to_dict()}
    if split is not None:
        doc["split_plan"] = split.to_dict()
    if subs is not None:
        doc["assignments"] = {str(s.k): list(s.chain_indices) for s in subs}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
