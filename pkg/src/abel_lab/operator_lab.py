"""Finite-rank test operators with known polar or Jordan structure.

Operators are dense complex matrices. A matrix built from a polar family
``B f = sum_n s_n (f, e_n) g_n`` or from Jordan blocks ``B = S J S^{-1}``
carries that structure as metadata so that spectral quantities can be
checked against construction instead of against a numerical solver.

Inner products are linear in the first argument: ``(f, e) = e^H f``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import SpecParseError, ValidationError
from .spectral import JordanChain, RootSystem

ORTHO_TOL = 1e-12
RECONSTRUCT_TOL = 1e-12
CONDITION_CAP = 1e8
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class KnownStructure:
    """Construction data from which the matrix can be rebuilt exactly.

    ``kind == "polar"``: ``singular_values`` with the families
    ``left_basis`` (columns ``e_n``) and ``right_basis`` (columns ``g_n``).
    ``kind == "jordan"``: ``blocks`` as ``(mu, chain_length)`` pairs and an
    invertible ``similarity``.
    """

    kind: str
    singular_values: Optional[np.ndarray] = None
    left_basis: Optional[np.ndarray] = None
    right_basis: Optional[np.ndarray] = None
    blocks: tuple = ()
    similarity: Optional[np.ndarray] = None
    tail: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "polar":
            s = np.asarray(self.singular_values, dtype=float)
            if s.ndim != 1 or s.size == 0:
                raise ValidationError("polar metadata needs a nonempty singular_values vector")
            if np.any(s <= 0):
                raise ValidationError("singular values must be strictly positive")
            if np.any(np.diff(s) > 0):
                raise ValidationError("singular values must be nonincreasing")
            for name in ("left_basis", "right_basis"):
                fam = np.asarray(getattr(self, name))
                if fam.ndim != 2 or fam.shape[1] != s.size:
                    raise ValidationError(f"{name} must have {s.size} columns")
                check_orthonormal(fam, name)
        elif self.kind == "jordan":
            if not self.blocks:
                raise ValidationError("jordan metadata needs at least one block")
            for mu, length in self.blocks:
                if mu == 0:
                    raise ValidationError("eigenvalue 0 has no finite characteristic number")
                if int(length) < 1:
                    raise ValidationError("chain lengths must be positive")
            S = np.asarray(self.similarity)
            cond = np.linalg.cond(S)
            if not np.isfinite(cond) or cond > CONDITION_CAP:
                raise ValidationError(
                    f"similarity condition number {cond:.3g} exceeds cap {CONDITION_CAP:.0e}"
                )
        else:
            raise ValidationError(f"unknown structure kind {self.kind!r}")

    def reconstruct(self) -> np.ndarray:
        if self.kind == "polar":
            G = np.asarray(self.right_basis, dtype=complex)
            E = np.asarray(self.left_basis, dtype=complex)
            return (G * np.asarray(self.singular_values)) @ E.conj().T
        S = np.asarray(self.similarity, dtype=complex)
        J = jordan_matrix(self.blocks)
        return S @ J @ np.linalg.inv(S)


@dataclass(frozen=True)
class DenseOperator:
    """Square complex matrix standing in for a compact operator."""

    entries: np.ndarray
    metadata: Optional[KnownStructure] = None

    def __post_init__(self):
        A = np.array(self.entries, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise ValidationError(f"entries must be a nonempty square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValidationError("entries contain NaN or Inf")
        A.setflags(write=False)
        object.__setattr__(self, "entries", A)
        if self.metadata is not None:
            R = self.metadata.reconstruct()
            scale = max(np.linalg.norm(A), 1e-300)
            if R.shape != A.shape or np.linalg.norm(R - A) > RECONSTRUCT_TOL * scale:
                raise ValidationError("metadata does not reproduce the matrix entries")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.entries

    def scaled(self, c: complex) -> "DenseOperator":
        return DenseOperator(c * self.entries)


@dataclass(frozen=True)
class SectorSpec:
    """Closed sector ``|arg z| <= theta`` with contour widening ``epsilon``."""

    theta: float
    epsilon: float

    def __post_init__(self):
        if not 0 < self.theta < math.pi / 2:
            raise ValidationError(f"theta={self.theta} must lie in (0, pi/2)")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        if self.theta + self.epsilon >= math.pi / 2:
            raise ValidationError("theta + epsilon must be below pi/2")

    @property
    def opening(self) -> float:
        """Argument of the contour rays, ``theta + epsilon``."""
        return self.theta + self.epsilon

    def check_order(self, alpha: float) -> None:
        if self.opening >= math.pi / (2 * alpha):
            raise ValidationError(
                f"sector constraint violated: theta+epsilon={self.opening:.6g} "
                f">= pi/(2*alpha)={math.pi / (2 * alpha):.6g}"
            )


def check_orthonormal(family: np.ndarray, name: str = "family", tol: float = ORTHO_TOL) -> None:
    """Raise ``ValidationError`` naming the worst pair if columns are not orthonormal."""
    F = np.asarray(family, dtype=complex)
    gram = F.conj().T @ F
    dev = np.abs(gram - np.eye(F.shape[1]))
    i, j = np.unravel_index(np.argmax(dev), dev.shape)
    if dev[i, j] > tol:
        raise ValidationError(
            f"{name} is not orthonormal: (v{i}, v{j}) = {gram[i, j]:.3e} "
            f"(deviation {dev[i, j]:.3e} > {tol:.0e})"
        )


def worked_singular_values(rho: float, n: int) -> np.ndarray:
    """``s_m = (m ln(m+1))^(-1/rho)`` for ``m = 1..n``."""
    m = np.arange(1, n + 1, dtype=float)
    return (m * np.log(m + 1.0)) ** (-1.0 / rho)


def jordan_matrix(blocks: Sequence) -> np.ndarray:
    """Block-diagonal upper Jordan form; ``B e_i = mu e_i + e_{i-1}`` inside a block."""
    n = sum(int(L) for _, L in blocks)
    J = np.zeros((n, n), dtype=complex)
    pos = 0
    for mu, L in blocks:
        L = int(L)
        for i in range(L):
            J[pos + i, pos + i] = mu
            if i > 0:
                J[pos + i - 1, pos + i] = 1.0
        pos += L
    return J


def build_from_polar(s, E, G, dim: Optional[int] = None) -> DenseOperator:
    s = np.asarray(s, dtype=float)
    E = np.asarray(E, dtype=complex)
    G = np.asarray(G, dtype=complex)
    if E.ndim == 1:
        E = E[:, None]
    if G.ndim == 1:
        G = G[:, None]
    if E.shape != G.shape:
        raise ValidationError(f"families differ in shape: {E.shape} vs {G.shape}")
    if E.shape[1] != s.size:
        raise ValidationError("number of singular values must match the family size")
    if dim is not None and dim != E.shape[0]:
        raise ValidationError("family vectors do not match the requested dimension")
    check_orthonormal(E, "left family E")
    check_orthonormal(G, "right family G")
    meta = KnownStructure("polar", singular_values=s, left_basis=E, right_basis=G)
    return DenseOperator(meta.reconstruct(), meta)


def build_sectorial_example(rho: float, n: int, theta: float, phases) -> DenseOperator:
    """Normal operator ``sum s_n e^{i phi_n} (f, e_n) e_n`` with the worked singular values.

    Every ``|phi_n| <= theta`` keeps the numerical range in the closed
    sector of semi-angle ``theta``.
    """
    phases = np.broadcast_to(np.asarray(phases, dtype=float), (n,))
    if not 0 < theta < math.pi / 2:
        raise ValidationError("theta must lie in (0, pi/2)")
    bad = np.flatnonzero(np.abs(phases) > theta)
    if bad.size:
        k = int(bad[0])
        raise ValidationError(f"phase[{k}]={phases[k]:.6g} exceeds the sector semi-angle {theta:.6g}")
    s = worked_singular_values(rho, n)
    E = np.eye(n, dtype=complex)
    G = np.diag(np.exp(1j * phases))
    op = build_from_polar(s, E, G)
    tail = {"sequence": "worked", "rho": float(rho), "truncated_at": int(n)}
    meta = KnownStructure("polar", s, E, G, tail=tail)
    return DenseOperator(op.entries, meta)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_similarity(n: int, rng: np.random.Generator, cond: float = 10.0) -> np.ndarray:
    """Random matrix with 2-norm condition number exactly ``cond``."""
    U = random_unitary(n, rng)
    V = random_unitary(n, rng)
    sv = np.geomspace(1.0, 1.0 / cond, n) if n > 1 else np.ones(1)
    return (U * sv) @ V.conj().T


def build_jordan(blocks, similarity=None):
    """Operator ``S J S^{-1}`` together with its exact root system.

    Returns ``(DenseOperator, RootSystem)``. The chains are the columns of
    ``S`` and the biorthogonal chains come from the rows of ``S^{-1}``.
    """
    blocks = tuple((complex(mu), int(L)) for mu, L in blocks)
    for mu, L in blocks:
        if mu == 0:
            raise ValidationError("eigenvalue mu=0 rejected: characteristic number 1/mu is not finite")
        if L < 1:
            raise ValidationError("chain lengths must be positive")
    n = sum(L for _, L in blocks)
    S = np.eye(n, dtype=complex) if similarity is None else np.asarray(similarity, dtype=complex)
    if S.shape != (n, n):
        raise ValidationError(f"similarity must be {n}x{n}, got {S.shape}")
    meta = KnownStructure("jordan", blocks=blocks, similarity=S)
    op = DenseOperator(meta.reconstruct(), meta)
    return op, root_system_from_metadata(meta)


def root_system_from_metadata(meta: KnownStructure) -> RootSystem:
    S = np.asarray(meta.similarity, dtype=complex)
    W = np.linalg.inv(S).conj().T
    chains, duals = [], []
    pos = 0
    for mu, L in meta.blocks:
        L = int(L)
        chains.append(JordanChain(complex(mu), S[:, pos:pos + L].copy()))
        # g_j = w_{k-j} pairs anti-diagonally with e_i
        duals.append(W[:, pos:pos + L][:, ::-1].copy())
        pos += L
    return RootSystem(tuple(chains), tuple(duals), np.ones(len(chains)))


# ---------------------------------------------------------------- file I/O


def _cplx(z) -> list:
    z = complex(z)
    return [float(f"{z.real:.17g}"), float(f"{z.imag:.17g}")]


def _cmat(A) -> list:
    return [[_cplx(z) for z in row] for row in np.atleast_2d(A)]


def operator_to_dict(op: DenseOperator) -> dict:
    doc = {"schema": SCHEMA_VERSION, "dim": op.dim, "kind": "dense", "entries": _cmat(op.entries)}
    meta = op.metadata
    if meta is None:
        return doc
    doc["kind"] = meta.kind
    if meta.kind == "polar":
        doc["singular_values"] = [float(f"{x:.17g}") for x in meta.singular_values]
        doc["left_basis"] = _cmat(meta.left_basis)
        doc["right_basis"] = _cmat(meta.right_basis)
    else:
        doc["blocks"] = [[_cplx(mu), int(L)] for mu, L in meta.blocks]
        doc["similarity"] = _cmat(meta.similarity)
    if meta.tail:
        doc["tail"] = meta.tail
    return doc


def save_spec(op: DenseOperator, path) -> None:
    Path(path).write_text(json.dumps(operator_to_dict(op), indent=1))


def _parse_cmat(doc, key, shape=None) -> np.ndarray:
    if key not in doc:
        raise SpecParseError(f"field '{key}': missing")
    rows = doc[key]
    try:
        A = np.array([[complex(p[0], p[1]) for p in row] for row in rows], dtype=complex)
    except (TypeError, IndexError, ValueError) as exc:
        raise SpecParseError(f"field '{key}': expected nested arrays of [re, im] pairs ({exc})") from None
    for i, row in enumerate(rows):
        for j, p in enumerate(row):
            if not isinstance(p, list) or len(p) != 2:
                raise SpecParseError(f"field '{key}[{i}][{j}]': expected [re, im]")
    if shape is not None and A.shape != shape:
        raise SpecParseError(f"field '{key}': expected shape {shape}, got {A.shape}")
    return A


def operator_from_dict(doc: dict) -> DenseOperator:
    if not isinstance(doc, dict):
        raise SpecParseError("top level must be a JSON object")
    for key in ("dim", "kind"):
        if key not in doc:
            raise SpecParseError(f"field '{key}': missing")
    n = doc["dim"]
    if not isinstance(n, int) or n < 1:
        raise SpecParseError(f"field 'dim': expected positive integer, got {n!r}")
    entries = _parse_cmat(doc, "entries", (n, n))
    kind = doc["kind"]
    if kind == "dense":
        return DenseOperator(entries)
    if kind == "polar":
        try:
            s = np.array(doc["singular_values"], dtype=float)
        except (KeyError, TypeError, ValueError):
            raise SpecParseError("field 'singular_values': expected list of reals") from None
        E = _parse_cmat(doc, "left_basis")
        G = _parse_cmat(doc, "right_basis")
        meta = KnownStructure("polar", s, E, G, tail=doc.get("tail", {}))
    elif kind == "jordan":
        try:
            blocks = tuple((complex(b[0][0], b[0][1]), int(b[1])) for b in doc["blocks"])
        except (KeyError, TypeError, IndexError, ValueError):
            raise SpecParseError("field 'blocks': expected list of [[re, im], length]") from None
        S = _parse_cmat(doc, "similarity", (n, n))
        meta = KnownStructure("jordan", blocks=blocks, similarity=S, tail=doc.get("tail", {}))
    else:
        raise SpecParseError(f"field 'kind': unknown value {kind!r}")
    return DenseOperator(entries, meta)


def load_spec(path) -> DenseOperator:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return operator_from_dict(doc)
