"""Closed-form Abel-Lidskii projector terms and series diagnostics.

For a chain ``e_0, ..., e_k`` of ``mu`` with dual chain ``g`` and
``lambda = 1/mu``, the term of ``f`` is

    sum_i e_i c_i(t),   c_i(t) = exp(-lambda^alpha t) sum_{m=0}^{k-i} H_m a_{i+m},

with static coefficients ``a_i = (f, g_{k-i})`` and

    H_m = exp(lambda^alpha t)/m! * d^m/dzeta^m exp(-zeta^(-alpha) t) at zeta = 1/lambda.

The chain term equals ``phi(B) P f`` for ``phi(zeta) = exp(-zeta^(-alpha) t)``
and the Riesz projector ``P`` of ``mu``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .spectral import RootSystem, as_matrix, inner

HM_VARIANTS = ("reciprocal", "char_variable")


def _derivative_terms(p: float, t: float, m: int) -> dict:
    """Terms ``{(j, i): c}`` of ``Q_m`` where ``d^m/dz^m exp(-z^p t) = Q_m(z) exp(-z^p t)``
    and each term is ``c z^(j p - i)``."""
    Q = {(0, 0): 1.0}
    for _ in range(m):
        nxt: dict = {}
        for (j, i), c in Q.items():
            d = (j * p - i) * c
            if d != 0:
                nxt[(j, i + 1)] = nxt.get((j, i + 1), 0.0) + d
            nxt[(j + 1, i + 1)] = nxt.get((j + 1, i + 1), 0.0) - p * t * c
        Q = nxt
    return Q


def hm_coefficient(alpha: float, lam: complex, t: float, m: int, variant: str = "reciprocal") -> complex:
    """``H_m(alpha, lambda, t)`` from the exact derivative recurrence.

    ``variant="char_variable"`` differentiates ``exp(-z^alpha t)`` at
    ``z = lambda`` instead, for comparison only.
    """
    if m < 0 or int(m) != m:
        raise ValidationError("m must be a nonnegative integer")
    if lam == 0:
        raise ValidationError("lambda must be nonzero")
    if variant == "reciprocal":
        p, logz = -alpha, -np.log(complex(lam))
    elif variant == "char_variable":
        p, logz = alpha, np.log(complex(lam))
    else:
        raise ValidationError(f"unknown H_m variant {variant!r}")
    Q = _derivative_terms(p, t, int(m))
    val = sum(c * np.exp((j * p - i) * logz) for (j, i), c in Q.items())
    return complex(val) / math.factorial(int(m))


def _lam_power(lam: complex, alpha: float) -> complex:
    return complex(np.exp(alpha * np.log(complex(lam))))


def static_coefficients(f, chain, g_chain) -> np.ndarray:
    E = chain.vectors
    G = np.asarray(g_chain, dtype=complex)
    if G.ndim == 1:
        G = G[:, None]
    if G.shape != E.shape:
        raise ValidationError(f"chain has shape {E.shape} but dual chain has {G.shape}")
    L = E.shape[1]
    return np.array([inner(f, G[:, L - 1 - i]) for i in range(L)])


def chain_coefficients(f, chain, g_chain, alpha: float, t: float, variant: str = "reciprocal") -> np.ndarray:
    """Time-dependent coefficients ``c_i(t)``, ``i = 0..k``."""
    a = static_coefficients(f, chain, g_chain)
    L = a.size
    lam = chain.char_number
    H = np.array([hm_coefficient(alpha, lam, t, m, variant) for m in range(L)])
    damp = np.exp(-_lam_power(lam, alpha) * t)
    return np.array([damp * np.dot(H[:L - i], a[i:]) for i in range(L)])


@dataclass(frozen=True)
class AbelTerm:
    nu: int
    value: np.ndarray
    norm: float
    chains: tuple
    coefficients: tuple  # one array per chain


def cluster_term(rs: RootSystem, chain_indices: Sequence[int], f, alpha: float, t: float,
                 nu: int = 0, variant: str = "reciprocal") -> AbelTerm:
    """``P_nu(alpha, t) f``: sum of chain terms over the chains of one group."""
    if t <= 0:
        raise ValidationError("t must be positive")
    f = np.asarray(f, dtype=complex)
    value = np.zeros(rs.dim, dtype=complex)
    coefs = []
    for idx in chain_indices:
        c = chain_coefficients(f, rs.chains[idx], rs.biorthogonal_chains[idx], alpha, t, variant)
        value = value + rs.chains[idx].vectors @ c
        coefs.append(c)
    return AbelTerm(nu, value, float(np.linalg.norm(value)), tuple(chain_indices), tuple(coefs))


def oblique_component(rs: RootSystem, chain_indices: Sequence[int], f) -> np.ndarray:
    """Component of ``f`` in the span of the given chains along the others."""
    f = np.asarray(f, dtype=complex)
    out = np.zeros(rs.dim, dtype=complex)
    for idx in chain_indices:
        out = out + rs.chains[idx].vectors @ static_coefficients(f, rs.chains[idx], rs.biorthogonal_chains[idx])
    return out


# ---------------------------------------------------------------- series


@dataclass
class SeriesReport:
    terms: list
    partial_sums: list
    tails: np.ndarray
    converged: bool
    total: np.ndarray
    residual: float = math.nan
    reference: str = ""
    divergence_signal: bool = False
    orientation: str = ""
    extra: dict = field(default_factory=dict)

    def rows(self):
        """``(nu, ||P_nu f||, ||partial sum||, tail)``."""
        return [(tm.nu, tm.norm, float(np.linalg.norm(ps)), float(tl))
                for tm, ps, tl in zip(self.terms, self.partial_sums, self.tails)]

    def to_dict(self) -> dict:
        return {
            "converged": self.converged, "residual": self.residual, "reference": self.reference,
            "divergence_signal": self.divergence_signal, "orientation": self.orientation,
            "term_norms": [tm.norm for tm in self.terms], "tails": [float(x) for x in self.tails],
            **self.extra,
        }


def tail_norms(norms) -> np.ndarray:
    """``tails[M] = sum_{nu >= M} norms[nu]``."""
    norms = np.asarray(norms, dtype=float)
    return np.cumsum(norms[::-1])[::-1] if norms.size else norms


def growth_signal(norms, run: int = 3) -> bool:
    """True when term norms grow over ``run`` consecutive groups."""
    norms = np.asarray(norms, dtype=float)
    up = np.diff(norms) > 0
    streak = 0
    for u in up:
        streak = streak + 1 if u else 0
        if streak >= run:
            return True
    return False


def _tails_converged(tails: np.ndarray, fnorm: float, tol: float = 1e-8) -> bool:
    # three consecutive tails below tolerance; at finite rank the tail past the end is zero
    padded = np.concatenate([tails, [0.0, 0.0, 0.0]])
    small = padded <= tol * max(fnorm, 1e-300)
    return bool(any(small[i:i + 3].all() for i in range(len(small) - 2)))


def abel_series(B, rs: RootSystem, plan, alpha: float, t: float, f, M_max: Optional[int] = None,
                sector=None, u_ref=None, variant: str = "reciprocal", quad_tol: float = 1e-10) -> SeriesReport:
    """Sum the group terms ``P_nu(alpha, t) f`` for ``nu < M_max``.

    The residual is taken against ``u_ref`` when given, otherwise against
    the contour integral over the sector contour closed at ``R~_{M-1}``
    (requires ``sector`` and intermediate radii in ``plan``).
    """
    from .clustering import chain_groups
    from .contour import ORIENTATION, build_contour, contour_integral

    f = np.asarray(f, dtype=complex)
    groups = chain_groups(rs, plan)
    M = len(groups) if M_max is None else min(int(M_max), len(groups))
    terms, partial = [], []
    acc = np.zeros(rs.dim, dtype=complex)
    for nu in range(M):
        tm = cluster_term(rs, groups[nu], f, alpha, t, nu, variant)
        acc = acc + tm.value
        terms.append(tm)
        partial.append(acc.copy())
    norms = [tm.norm for tm in terms]
    tails = tail_norms(norms)
    fnorm = float(np.linalg.norm(f))
    residual, ref = math.nan, ""
    if u_ref is not None:
        residual, ref = float(np.linalg.norm(acc - np.asarray(u_ref))), "reference"
    elif sector is not None and plan.R_tilde is not None and M > 0:
        path = build_contour(sector, plan.inner_radius(), plan.R_tilde[:M])
        u = contour_integral(B, f, path, alpha, t, tol=quad_tol)
        residual, ref = float(np.linalg.norm(acc - u)), "contour"
    conv = _tails_converged(tails, fnorm)
    if np.isfinite(residual):
        conv = conv and residual <= 1e-6 * max(fnorm, 1e-300)
    return SeriesReport(terms, partial, tails, conv, acc, residual, ref, growth_signal(norms),
                        ORIENTATION)


def ring_agreement(B, rs: RootSystem, plan, sector, alpha: float, t: float, f,
                   quad_tol: float = 1e-10) -> np.ndarray:
    """Per-ring ``||P_nu f - contour integral over ring nu||``."""
    from .clustering import chain_groups
    from .contour import build_contour, contour_integral

    groups = chain_groups(rs, plan)
    path = build_contour(sector, plan.inner_radius(), plan.R_tilde)
    out = []
    for nu, idxs in enumerate(groups):
        closed = cluster_term(rs, idxs, f, alpha, t, nu).value
        quad = contour_integral(B, f, path.ring(nu), alpha, t, tol=quad_tol)
        out.append(float(np.linalg.norm(closed - quad)))
    return np.array(out)


# ---------------------------------------------------------------- split series


@dataclass
class SplitReport:
    term_norms: np.ndarray  # [sub-operator, group]
    sub_ids: list
    tails_k: np.ndarray
    tails_nu: np.ndarray
    total: np.ndarray
    unsplit: np.ndarray
    regroup_error: float
    identity_residual: float
    tails_decay: bool

    def to_dict(self) -> dict:
        return {
            "sub_operators": self.sub_ids,
            "term_norms": self.term_norms.tolist(),
            "tails_k": self.tails_k.tolist(),
            "tails_nu": self.tails_nu.tolist(),
            "regroup_error": self.regroup_error,
            "identity_residual": self.identity_residual,
            "tails_decay": self.tails_decay,
        }


def split_series(B, rs: RootSystem, cluster_plan, split_plan, alpha_low: float, t: float, f,
                 sector, subs=None, quad_tol: float = 1e-11) -> SplitReport:
    """Double series over sub-operators ``B_k`` and rings.

    Each term is the ring contour integral for the compression ``B_k``
    applied to the component ``f_k`` of ``f`` in its subspace; the unsplit
    reference is the closed-form group sum.
    """
    from .clustering import assign_suboperators, chain_groups
    from .contour import build_contour, contour_integral

    f = np.asarray(f, dtype=complex)
    if subs is None:
        subs = assign_suboperators(B, rs, cluster_plan, split_plan)
    groups = chain_groups(rs, cluster_plan)
    comps = [oblique_component(rs, s.chain_indices, f) for s in subs]
    fnorm = float(np.linalg.norm(f))
    if np.linalg.norm(sum(comps) - f) > 1e-8 * max(fnorm, 1.0):
        raise ValidationError("f is not spanned by the root vectors of the sub-operators")
    path = build_contour(sector, cluster_plan.inner_radius(), cluster_plan.R_tilde)
    norms = np.zeros((len(subs), len(groups)))
    total = np.zeros(rs.dim, dtype=complex)
    for a, (s, fk) in enumerate(zip(subs, comps)):
        y = s.basis.conj().T @ fk
        owned = set(s.chain_indices)
        for nu, idxs in enumerate(groups):
            if not owned.intersection(idxs):
                continue
            val = s.basis @ contour_integral(s.matrix, y, path.ring(nu), alpha_low, t, tol=quad_tol)
            norms[a, nu] = np.linalg.norm(val)
            total = total + val
    unsplit = sum((cluster_term(rs, idxs, f, alpha_low, t, nu).value for nu, idxs in enumerate(groups)),
                  np.zeros(rs.dim, dtype=complex))
    tails_k = tail_norms(norms.sum(axis=1))
    per_nu = norms.sum(axis=0)
    tails_nu = tail_norms(per_nu)
    h = len(per_nu) // 2
    decay = bool(np.all(np.diff(per_nu[h:]) <= 0)) if len(per_nu) > 1 else True
    return SplitReport(norms, [s.k for s in subs], tails_k, tails_nu, total, unsplit,
                       float(np.linalg.norm(total - unsplit)), float(np.linalg.norm(total - f)), decay)


# ---------------------------------------------------------------- evolution


def eigen_expansion(B, alpha: float, t: float, f) -> np.ndarray:
    """``sum exp(-lambda_q^alpha t) (f, g_q) e_q`` from a plain eigendecomposition."""
    A = as_matrix(B)
    w, V = np.linalg.eig(A)
    c = np.linalg.solve(V, np.asarray(f, dtype=complex))
    lam_a = np.exp(alpha * np.log(1.0 / w))
    return V @ (np.exp(-lam_a * t) * c)


def evolution_solution(B, alpha: float, t_grid, f, rs: Optional[RootSystem] = None) -> list:
    """Rows ``(t, u(t), ||u(t)||, residual against the eigen-expansion)``.

    The residual is ``nan`` when ``B`` has a nontrivial Jordan chain.
    """
    from .spectral import compute_root_system

    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0):
        raise ValidationError("t grid must be positive")
    if rs is None:
        rs = compute_root_system(B)
    f = np.asarray(f, dtype=complex)
    diagonalizable = all(c.length == 1 for c in rs.chains)
    rows = []
    every = list(range(len(rs.chains)))
    for t in t_grid:
        u = cluster_term(rs, every, f, alpha, float(t)).value
        res = float(np.linalg.norm(u - eigen_expansion(B, alpha, t, f))) if diagonalizable else math.nan
        rows.append((float(t), u, float(np.linalg.norm(u)), res))
    return rows


def write_series_csv(path, report: SeriesReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["nu", "term_norm", "partial_sum_norm", "tail", "residual"])
        for nu, tn, pn, tl in report.rows():
            w.writerow([nu, repr(tn), repr(pn), repr(tl), repr(report.residual)])


def write_evolution_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u_norm", "residual_vs_oracle"])
        for t, _, n, r in rows:
            w.writerow([repr(t), repr(n), repr(r)])
