"""Scenario files: versioned JSON describing one experiment."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticError, field_validator, model_validator

from .errors import SpecParseError, ValidationError
from .operator_lab import DenseOperator, build_jordan, load_spec, random_similarity

SCHEMA = "abel-lab/1"
CHECK_NAMES = ("spectral", "ring_algebra", "residue", "series", "identity", "ray_bound", "arc_bound",
               "determinant", "cartan", "counting", "split")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SequenceOperator(_Strict):
    """Characteristic numbers ``scale * n^(1/sigma) * exp(i phase_n)``."""

    kind: Literal["sequence"]
    count: int = Field(gt=0, le=256)
    sigma: float = Field(gt=0)
    scale: float = Field(default=1.0, gt=0)
    phase_spread: float = Field(default=0.0, ge=0, lt=math.pi / 2)
    similarity_cond: float = Field(default=1.0, ge=1)


class ClusterOperator(_Strict):
    """Groups of sizes ``sizes`` with spacing ``inner_spacing`` and boundary gap ``gap``."""

    kind: Literal["clusters"]
    sizes: List[int] = Field(min_length=1)
    inner_spacing: float = Field(gt=0)
    gap: float = Field(gt=0)
    start: float = Field(default=1.0, gt=0)
    phase_spread: float = Field(default=0.0, ge=0, lt=math.pi / 2)
    similarity_cond: float = Field(default=1.0, ge=1)


class JordanOperator(_Strict):
    """Blocks ``[mu_re, mu_im, length]``."""

    kind: Literal["jordan"]
    blocks: List[Tuple[float, float, int]] = Field(min_length=1)
    similarity_cond: float = Field(default=1.0, ge=1)


class FileOperator(_Strict):
    kind: Literal["file"]
    path: str


OperatorChoice = Union[SequenceOperator, ClusterOperator, JordanOperator, FileOperator]


class SectorModel(_Strict):
    theta: float = Field(ge=0, lt=math.pi / 2)
    epsilon: float = Field(gt=0)


class VectorChoice(_Strict):
    kind: Literal["random", "basis", "file"] = "random"
    index: int = 0
    path: Optional[str] = None


class Summation(_Strict):
    alpha: float = Field(gt=0)
    t_grid: List[float] = Field(min_length=1)
    f: VectorChoice = VectorChoice()

    @field_validator("t_grid")
    @classmethod
    def _ascending(cls, v):
        if any(t <= 0 for t in v):
            raise ValueError("t_grid must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("t_grid must be strictly ascending")
        return v


class Clustering(_Strict):
    K: float = Field(default=1.0, gt=0)
    order_exp: float = Field(default=1.0, gt=0)


class Split(_Strict):
    enabled: bool = False
    gamma: int = Field(default=2, ge=2)
    beta_exp: int = Field(default=1, ge=1)
    eta_inv: int = Field(default=1, ge=1)
    alpha_low: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _orders(self):
        if self.gamma != self.beta_exp + self.eta_inv:
            raise ValueError("gamma must equal beta_exp + eta_inv")
        if self.enabled and self.alpha_low is None:
            raise ValueError("alpha_low is required when the split is enabled")
        return self


class Scenario(_Strict):
    schema_: Literal["abel-lab/1"] = Field(alias="schema")
    name: str
    seed: int = 42
    operator: OperatorChoice = Field(discriminator="kind")
    sector: SectorModel
    summation: Summation
    clustering: Clustering = Clustering()
    split: Split = Split()
    checks: List[str] = Field(default_factory=lambda: list(CHECK_NAMES))
    output_dir: Optional[str] = None

    @field_validator("checks")
    @classmethod
    def _known_checks(cls, v):
        bad = [c for c in v if c not in CHECK_NAMES]
        if bad:
            raise ValueError(f"unknown checks {bad}; choose from {list(CHECK_NAMES)}")
        return v

    @model_validator(mode="after")
    def _sector_order(self):
        phi = self.sector.theta + self.sector.epsilon
        for name, a in (("alpha", self.summation.alpha), ("split.alpha_low", self.split.alpha_low)):
            if a is not None and phi >= math.pi / (2 * a):
                raise ValueError(
                    f"sector constraint violated: theta+epsilon={phi:.6g} >= pi/(2*{name})={math.pi / (2 * a):.6g}"
                )
        return self


def format_errors(exc: PydanticError) -> str:
    lines = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)


def parse_scenario(doc: dict, base_dir: Path = Path(".")) -> Scenario:
    """Validate a scenario document; referenced files are resolved against ``base_dir``."""
    try:
        sc = Scenario.model_validate(doc)
    except PydanticError as exc:
        raise ValidationError(format_errors(exc)) from None
    for label, rel in (("operator.path", getattr(sc.operator, "path", None)), ("summation.f.path", sc.summation.f.path)):
        if rel is not None and not (base_dir / rel).is_file():
            raise ValidationError(f"{label}: file {rel!r} does not exist")
    if sc.summation.f.kind == "file" and sc.summation.f.path is None:
        raise ValidationError("summation.f.path: required when f.kind is 'file'")
    return sc


def load_scenario(path) -> Tuple[Scenario, Path]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise SpecParseError(f"{path}: {exc.strerror}") from None
    return parse_scenario(doc, path.parent), path.parent


def with_override(sc: Scenario, param: str, value: float) -> Scenario:
    """Copy of ``sc`` with one sweep parameter replaced."""
    doc = sc.model_dump(by_alias=True)
    if param == "alpha":
        doc["summation"]["alpha"] = float(value)
    elif param == "K":
        doc["clustering"]["K"] = float(value)
    elif param == "t":
        doc["summation"]["t_grid"] = [float(value)]
    elif param == "dim":
        if doc["operator"]["kind"] != "sequence":
            raise ValidationError("dim sweeps need a 'sequence' operator")
        doc["operator"]["count"] = int(value)
    else:
        raise ValidationError(f"unknown sweep parameter {param!r}; choose alpha, K, t or dim")
    try:
        return Scenario.model_validate(doc)
    except PydanticError as exc:
        raise ValidationError(format_errors(exc)) from None


# ---------------------------------------------------------------- building


def _diagonalizable(chars: np.ndarray, cond: float, rng: np.random.Generator):
    S = random_similarity(chars.size, rng, cond=cond) if cond > 1.0 else None
    dense, rs = build_jordan([(1.0 / c, 1) for c in chars], S)
    return dense.matrix, rs


def build_operator(sc: Scenario, base_dir: Path, rng: np.random.Generator):
    """Operator matrix and, when known from the construction, its root system."""
    op = sc.operator
    if op.kind == "sequence":
        n = np.arange(1, op.count + 1, dtype=float)
        phases = rng.uniform(-op.phase_spread, op.phase_spread, op.count)
        return _diagonalizable(op.scale * n ** (1.0 / op.sigma) * np.exp(1j * phases), op.similarity_cond, rng)
    if op.kind == "clusters":
        mods, x = [], op.start
        for size in op.sizes:
            for _ in range(size):
                mods.append(x)
                x += op.inner_spacing
            x += op.gap - op.inner_spacing
        mods = np.array(mods)
        chars = mods * np.exp(1j * rng.uniform(-op.phase_spread, op.phase_spread, mods.size))
        return _diagonalizable(chars, op.similarity_cond, rng)
    if op.kind == "jordan":
        blocks = [(complex(re, im), int(L)) for re, im, L in op.blocks]
        n = sum(L for _, L in blocks)
        S = random_similarity(n, rng, cond=op.similarity_cond) if op.similarity_cond > 1 else None
        dense, rs = build_jordan(blocks, S)
        return dense.matrix, rs
    dense: DenseOperator = load_spec(base_dir / op.path)
    return dense.matrix, None


def build_vector(sc: Scenario, base_dir: Path, dim: int, rng: np.random.Generator) -> np.ndarray:
    choice = sc.summation.f
    if choice.kind == "basis":
        if not 0 <= choice.index < dim:
            raise ValidationError(f"summation.f.index: {choice.index} outside [0, {dim})")
        f = np.zeros(dim, dtype=complex)
        f[choice.index] = 1.0
        return f
    if choice.kind == "file":
        data = json.loads((base_dir / choice.path).read_text())
        f = np.array([complex(*z) if isinstance(z, list) else complex(z) for z in data], dtype=complex)
        if f.shape != (dim,):
            raise ValidationError(f"summation.f.path: vector length {f.size} does not match dimension {dim}")
        return f
    return rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
