"""Root systems, biorthogonal chains, Riesz projectors and numerical ranges.

Conventions: ``mu`` is an eigenvalue of ``B`` and ``1/mu`` its
characteristic number. A chain ``e_0, ..., e_k`` satisfies
``B e_0 = mu e_0`` and ``B e_i = mu e_i + e_{i-1}``. The dual chain
``g_0, ..., g_k`` is a Jordan chain of ``B^*`` at ``conj(mu)`` and pairs
anti-diagonally: ``(e_i, g_{k-i}) = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    AmbiguousJordanStructure,
    ContourProximityError,
    PairingError,
    ValidationError,
)

DEFAULT_SEED = 42


def as_matrix(B) -> np.ndarray:
    """Accept a ``DenseOperator`` or anything array-like."""
    return np.asarray(getattr(B, "entries", B), dtype=complex)


def inner(f, g) -> complex:
    """``(f, g)``, linear in ``f``."""
    return complex(np.vdot(g, f))


@dataclass(frozen=True)
class JordanChain:
    eigenvalue: complex
    vectors: np.ndarray  # columns e_0 .. e_k

    def __post_init__(self):
        V = np.asarray(self.vectors, dtype=complex)
        if V.ndim == 1:
            V = V[:, None]
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "eigenvalue", complex(self.eigenvalue))
        if self.eigenvalue == 0:
            raise ValidationError("chain eigenvalue must be nonzero")

    @property
    def length(self) -> int:
        return self.vectors.shape[1]

    @property
    def char_number(self) -> complex:
        return 1.0 / self.eigenvalue

    def gram_det(self) -> float:
        V = self.vectors / np.linalg.norm(self.vectors, axis=0)
        return float(abs(np.linalg.det(V.conj().T @ V)))


@dataclass(frozen=True)
class RootSystem:
    """All Jordan chains of an operator with their biorthogonal chains."""

    chains: tuple
    biorthogonal_chains: tuple  # arrays of columns g_0 .. g_k, one per chain
    pairing_normalization: np.ndarray

    @property
    def dim(self) -> int:
        return self.chains[0].vectors.shape[0]

    def vectors(self) -> np.ndarray:
        return np.hstack([c.vectors for c in self.chains])

    def duals(self) -> np.ndarray:
        return np.hstack(self.biorthogonal_chains)

    def eigenvalue_groups(self, tol: float = 1e-10) -> list:
        """Distinct eigenvalues ordered by ascending ``|1/mu|``.

        Returns a list of ``(mu, [chain indices])``.
        """
        groups: list = []
        for idx, c in enumerate(self.chains):
            for g in groups:
                if abs(g[0] - c.eigenvalue) <= tol * max(1.0, abs(g[0])):
                    g[1].append(idx)
                    break
            else:
                groups.append((c.eigenvalue, [idx]))
        groups.sort(key=lambda g: (abs(1.0 / g[0]), np.angle(1.0 / g[0])))
        return groups

    def char_numbers(self) -> np.ndarray:
        """Distinct characteristic numbers in ascending modulus."""
        return np.array([1.0 / mu for mu, _ in self.eigenvalue_groups()])

    def to_dict(self) -> dict:
        out = []
        for c, g, w in zip(self.chains, self.biorthogonal_chains, self.pairing_normalization):
            out.append({
                "eigenvalue": [c.eigenvalue.real, c.eigenvalue.imag],
                "length": c.length,
                "pairing_normalization": float(w),
                "chain": [[[z.real, z.imag] for z in col] for col in c.vectors.T],
                "dual": [[[z.real, z.imag] for z in col] for col in g.T],
            })
        return {"dim": self.dim, "chains": out}


# ---------------------------------------------------------------- extraction


def _null_basis(M: np.ndarray, count: int) -> np.ndarray:
    _, _, Vh = np.linalg.svd(M)
    return Vh[M.shape[1] - count:].conj().T


def _cluster(values: np.ndarray, radius: float) -> list:
    """Single-linkage clusters of complex values."""
    n = len(values)
    labels = list(range(n))

    def find(i):
        while labels[i] != i:
            labels[i] = labels[labels[i]]
            i = labels[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) < radius:
                labels[find(i)] = find(j)
    clusters: dict = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(i)
    return list(clusters.values())


def _nilpotent_chains(N: np.ndarray, thr: float) -> list:
    """Jordan chains of an (approximately) nilpotent matrix, as lists of vectors.

    Each chain is ``[N^{L-1} v, ..., N v, v]``.
    """
    m = N.shape[0]
    scale = max(1.0, np.linalg.norm(N, 2))
    ranks = [m]
    powers = [np.eye(m, dtype=complex)]
    while ranks[-1] > 0:
        P = powers[-1] @ N
        j = len(powers)
        sv = np.linalg.svd(P, compute_uv=False)
        t = thr * scale ** (j - 1)
        near = sv[(sv > t / 100) & (sv < t * 100)]
        if near.size:
            raise AmbiguousJordanStructure(
                f"singular value {near[0]:.3e} of N^{j} is within a factor 100 of the "
                f"rank threshold {t:.3e}; use a metadata-built operator"
            )
        ranks.append(int(np.sum(sv > t)))
        powers.append(P)
        if j > m:
            raise AmbiguousJordanStructure("cluster block is not nilpotent at this tolerance")
    ranks.append(0)
    tops: list = []  # (length, top vector)
    for L in range(len(ranks) - 2, 0, -1):
        count = ranks[L - 1] - 2 * ranks[L] + ranks[L + 1]
        if count <= 0:
            continue
        K_L = _null_basis(powers[L], m - ranks[L])
        base = [_null_basis(powers[L - 1], m - ranks[L - 1])] if ranks[L - 1] < m else []
        for Lp, v in tops:
            base.append((np.linalg.matrix_power(N, Lp - L) @ v)[:, None])
        if base:
            Bm = np.hstack(base)
            Qb, _ = np.linalg.qr(Bm)
            R = K_L - Qb @ (Qb.conj().T @ K_L)
        else:
            R = K_L
        U, sv, _ = np.linalg.svd(R)
        if sv.size < count or sv[count - 1] < 1e-6:
            raise AmbiguousJordanStructure(f"cannot extract {count} chains of length {L}")
        for c in range(count):
            tops.append((L, U[:, c]))
    chains = []
    for L, v in tops:
        vecs = [v]
        for _ in range(L - 1):
            vecs.append(N @ vecs[-1])
        chains.append(vecs[::-1])
    return chains


def compute_root_system(B, tol: float = 1e-6, use_metadata: bool = True) -> RootSystem:
    """Jordan chains and their biorthogonal chains.

    Metadata-carried Jordan structure is used directly when present and
    ``use_metadata`` is set. Otherwise eigenvalues closer than
    ``100*tol*||B||`` are merged into one cluster whose Jordan structure is
    decided from ranks of powers of the nilpotent part at threshold
    ``tol*||B||``.
    """
    meta = getattr(B, "metadata", None)
    if use_metadata and meta is not None and meta.kind == "jordan":
        from .operator_lab import root_system_from_metadata

        return root_system_from_metadata(meta)
    A = as_matrix(B)
    n = A.shape[0]
    normB = np.linalg.norm(A, 2)
    evals = np.linalg.eigvals(A)
    if np.min(np.abs(evals)) < tol * normB:
        raise ValidationError("operator has an eigenvalue below tol*||B||; no characteristic number")
    chains = []
    for idx in _cluster(evals, 100 * tol * normB):
        mu = complex(np.mean(evals[idx]))
        m = len(idx)
        shifted = A - mu * np.eye(n)
        Q = _null_basis(np.linalg.matrix_power(shifted, m), m)
        N = Q.conj().T @ shifted @ Q
        for vecs in _nilpotent_chains(N, tol * normB):
            E = Q @ np.column_stack(vecs)
            E = E / np.linalg.norm(E[:, 0])
            chains.append(JordanChain(mu, E))
    chains.sort(key=lambda c: (abs(1 / c.eigenvalue), np.angle(1 / c.eigenvalue), -c.length))
    duals, weights = biorthogonal_system(chains, A)
    return RootSystem(tuple(chains), tuple(duals), weights)


def biorthogonal_system(chains: Sequence[JordanChain], B=None):
    """Dual chains ``g`` with ``(e_i, g_{k-i}) = 1`` and zero cross pairings.

    Returns ``(duals, normalization)`` where ``normalization[c]`` is the
    norm of the dual eigenvector of chain ``c`` before scaling; large values
    signal an ill-conditioned eigenvalue.
    """
    E = np.hstack([c.vectors for c in chains])
    if E.shape[0] != E.shape[1]:
        raise PairingError(f"chains hold {E.shape[1]} vectors for dimension {E.shape[0]}")
    cond = np.linalg.cond(E)
    if not np.isfinite(cond) or cond > 1e14:
        raise PairingError(f"root vectors are numerically dependent (cond={cond:.3g}); "
                           "chain extraction failed upstream")
    W = np.linalg.inv(E).conj().T
    duals, weights = [], []
    pos = 0
    for c in chains:
        L = c.length
        G = W[:, pos:pos + L][:, ::-1].copy()
        duals.append(G)
        weights.append(np.linalg.norm(G[:, L - 1]) * np.linalg.norm(c.vectors[:, 0]))
        pos += L
    return duals, np.array(weights)


def pairing_matrix(rs: RootSystem) -> np.ndarray:
    """Matrix of ``(e_a, g_b)`` over all vectors."""
    return rs.duals().conj().T @ rs.vectors()


def expected_pairing(rs: RootSystem) -> np.ndarray:
    """Block anti-identity: the pairing pattern a correct root system must show."""
    blocks = [np.eye(c.length)[::-1] for c in rs.chains]
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    pos = 0
    for b in blocks:
        L = b.shape[0]
        out[pos:pos + L, pos:pos + L] = b
        pos += L
    return out


def chain_residual(B, chain: JordanChain) -> float:
    A = as_matrix(B)
    E = chain.vectors
    R = A @ E - chain.eigenvalue * E
    R[:, 1:] -= E[:, :-1]
    return float(np.max(np.linalg.norm(R, axis=0)))


# ---------------------------------------------------------------- projectors


def riesz_projector(B, mu: complex, radius: float, f, tol: float = 1e-13, max_nodes: int = 1 << 16):
    """``P f = (1/2 pi i) \\oint_{|z-mu|=radius} (z - B)^{-1} f dz``.

    The circle lives in the eigenvalue plane, i.e. the image of a contour
    around ``1/mu`` under ``lambda -> 1/lambda``. Periodic trapezoid rule
    with node doubling until successive results agree to ``tol``.
    """
    A = as_matrix(B)
    f = np.asarray(f, dtype=complex)
    n = A.shape[0]
    evals = np.linalg.eigvals(A)
    dist = np.abs(evals - mu)
    close = np.abs(dist - radius)
    if np.min(close) < 1e-6 * radius:
        k = int(np.argmin(close))
        raise ContourProximityError(
            f"circle |z-{mu:.6g}|={radius:.6g} passes within {close[k]:.3e} of eigenvalue {evals[k]:.6g}"
        )
    inside = evals[dist < radius]
    if inside.size == 0:
        raise ValidationError("circle encloses no eigenvalue")
    spread = np.max(np.abs(inside - mu))
    if spread > radius / 2:
        raise ValidationError("circle must enclose exactly one (possibly defective) eigenvalue")

    def rule(m):
        w = np.exp(2j * np.pi * np.arange(m) / m)
        z = mu + radius * w
        acc = np.zeros(n, dtype=complex)
        for zj, wj in zip(z, w):
            acc += radius * wj * np.linalg.solve(zj * np.eye(n) - A, f)
        return acc / m

    m = 64
    prev = rule(m)
    while m < max_nodes:
        m *= 2
        cur = rule(m)
        if np.linalg.norm(cur - prev) <= tol * max(1.0, np.linalg.norm(f)):
            return cur
        prev = cur
    return prev


# ---------------------------------------------------------------- numerical range


@dataclass(frozen=True)
class NumericalRangeSample:
    max_arg: float
    samples: int
    skipped: int
    values: np.ndarray


def sample_unit_sphere(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def numerical_range_sample(B, samples: int, seed: Optional[int] = DEFAULT_SEED) -> NumericalRangeSample:
    if samples < 1:
        raise ValidationError("samples must be at least 1")
    A = as_matrix(B)
    rng = np.random.default_rng(seed)
    F = sample_unit_sphere(A.shape[0], samples, rng)
    vals = np.einsum("ki,ij,kj->k", F.conj(), A, F)
    floor = 1e-15 * max(np.linalg.norm(A, 2), 1e-300)
    keep = np.abs(vals) > floor
    kept = vals[keep]
    max_arg = float(np.max(np.abs(np.angle(kept)))) if kept.size else 0.0
    return NumericalRangeSample(max_arg, samples, int(np.sum(~keep)), kept)


def numerical_range_max_arg(B, samples: int, seed: Optional[int] = DEFAULT_SEED) -> float:
    """Largest ``|arg (Bf, f)|`` over seeded random unit vectors.

    This is a lower bound on the angular extent of the numerical range.
    """
    return numerical_range_sample(B, samples, seed).max_arg


def compress_out(B, f) -> np.ndarray:
    """``Q B Q`` with ``Q`` the orthogonal projector onto ``f``'s complement."""
    A = as_matrix(B)
    f = np.asarray(f, dtype=complex)
    f = f / np.linalg.norm(f)
    Q = np.eye(A.shape[0]) - np.outer(f, f.conj())
    return Q @ A @ Q
