"""Figures written next to the CSV and JSON outputs of a run."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_contour(path: Path, contour, char_numbers, radii=()) -> Path:
    """Quadrature nodes of the contour, the ring arcs ``|lambda| = R~`` and the characteristic numbers."""
    ids, lam, _ = contour.nodes(16)
    fig, ax = plt.subplots(figsize=(5, 4.5))
    ax.scatter(lam.real, lam.imag, c=ids, s=4, cmap="viridis", label="nodes")
    a = np.linspace(-contour.phi, contour.phi, 200)
    for k, r in enumerate(radii):
        ax.plot(r * np.cos(a), r * np.sin(a), ls="--", lw=0.8, color="gray", label="ring arcs" if k == 0 else None)
    z = np.asarray(char_numbers)
    ax.scatter(z.real, z.imag, marker="x", color="crimson", s=18, label="1/mu")
    ax.set_xlabel("Re lambda")
    ax.set_ylabel("Im lambda")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper left", fontsize=8)
    return _save(fig, path)


def plot_terms(path: Path, t_values, term_norms) -> Path:
    """``||P_nu f||`` against the group index, one curve per ``t``."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for t, norms in zip(t_values, term_norms):
        norms = np.asarray(norms, dtype=float)
        ax.semilogy(np.arange(norms.size), np.maximum(norms, 1e-300), marker="o", ms=3, label=f"t={t:g}")
    ax.set_xlabel("group nu")
    ax.set_ylabel("||P_nu f||")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_identity(path: Path, t_values, residuals, label: str = "||u(t) - f|| / ||f||") -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(t_values, np.maximum(residuals, 1e-300), marker="o")
    ax.set_xlabel("t")
    ax.set_ylabel(label)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, path)


def plot_split(path: Path, term_norms, sub_ids) -> Path:
    """Heat map of the double-series terms over sub-operators and groups."""
    M = np.asarray(term_norms, dtype=float)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    with np.errstate(divide="ignore"):
        img = ax.imshow(np.log10(np.where(M > 0, M, np.nan)), aspect="auto", cmap="magma")
    ax.set_yticks(range(len(sub_ids)), [f"B_{k}" for k in sub_ids])
    ax.set_xlabel("group nu")
    fig.colorbar(img, ax=ax, label="log10 term norm")
    return _save(fig, path)


def plot_sweep(path: Path, values, residuals, param: str) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy(values, np.maximum(np.asarray(residuals, dtype=float), 1e-300), marker="s")
    ax.set_xlabel(param)
    ax.set_ylabel("max residual")
    return _save(fig, path)
