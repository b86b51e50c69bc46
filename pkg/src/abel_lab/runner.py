"""Scenario pipeline: build, spectral, clustering, contour, summation, bounds, split."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import abel_sum, clustering, contour, counting, entire_bounds, plots
from .operator_lab import SectorSpec
from .scenario import Scenario, build_operator, build_vector
from .spectral import chain_residual, compute_root_system, expected_pairing, pairing_matrix

SUMMARY_VERSION = 1


@dataclass
class Check:
    name: str
    module: str
    passed: bool
    value: float
    threshold: float
    hard: bool = True
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "module": self.module, "passed": bool(self.passed),
                "value": _clean(self.value), "threshold": _clean(self.threshold),
                "hard": self.hard, "note": self.note}


@dataclass
class RunResult:
    summary: dict
    checks: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if all(c.passed for c in self.checks if c.hard) else 1


def _clean(x):
    """JSON-safe scalars; non-finite floats become strings."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in x]
    return x


def _ring_algebra(plan) -> tuple:
    bounds = plan.boundary_moduli()
    ident = np.max(np.abs(plan.R * (1 - plan.delta) - bounds) / bounds)
    inv = np.max(np.abs(1 / plan.delta - (1 + bounds ** plan.order_exp / plan.K)) / (1 / plan.delta))
    return float(max(ident, inv)), clustering.ring_nesting_ok(plan)


def run_scenario(sc: Scenario, base_dir: Path, out_dir: Path, seed=None, figures: bool = True) -> RunResult:
    """Run every requested stage and write the artifacts to ``out_dir``."""
    seed = sc.seed if seed is None else int(seed)
    rng = np.random.default_rng(seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    want = set(sc.checks)
    checks: list = []
    info: dict = {}

    def add(*args, **kw):
        checks.append(Check(*args, **kw))

    # build and spectral
    A, rs = build_operator(sc, base_dir, rng)
    if rs is None:
        rs = compute_root_system(A)
    f = build_vector(sc, base_dir, A.shape[0], rng)
    fnorm = float(np.linalg.norm(f))
    normB = float(np.linalg.norm(A, 2))
    info["dim"] = int(A.shape[0])
    info["norm"] = normB
    if "spectral" in want:
        dev = float(np.max(np.abs(pairing_matrix(rs) - expected_pairing(rs))))
        add("pairing_anti_diagonal", "spectral_core", dev <= 1e-8, dev, 1e-8)
        res = max(chain_residual(A, c) for c in rs.chains)
        add("chain_residual", "spectral_core", res <= 1e-8 * max(normB, 1.0), res, 1e-8 * max(normB, 1.0))

    # clustering
    sector = SectorSpec(sc.sector.theta, sc.sector.epsilon)
    plan = clustering.plan_from_root_system(rs, sc.clustering.K, sc.clustering.order_exp)
    plan = clustering.choose_all_radii(plan, A, phi=sector.opening)
    info["groups"] = plan.sizes()
    info["n_rings"] = plan.n_groups
    if "ring_algebra" in want:
        err, nest = _ring_algebra(plan)
        add("ring_identities", "clustering", err <= 1e-12, err, 1e-12)
        add("ring_nesting", "clustering", nest, float(nest), 1.0)
    path = contour.build_contour(sector, plan.inner_radius(), plan.R_tilde)
    contour.write_contour_dump(out_dir / "contour.csv", path)
    chars = np.array([c.char_number for c in rs.chains])

    # contour agreement and series
    alpha = sc.summation.alpha
    t_grid = list(sc.summation.t_grid)
    series_rows, term_norms, id_res, series_res = [], [], [], []
    all_converged = True
    for t in t_grid:
        if "residue" in want:
            dev = float(np.max(abel_sum.ring_agreement(A, rs, plan, sector, alpha, t, f)))
            add(f"residue_quadrature[t={t:g}]", "abel_sum", dev <= 1e-8 * fnorm, dev, 1e-8 * fnorm)
        rep = abel_sum.abel_series(A, rs, plan, alpha, t, f, sector=sector if "series" in want else None)
        all_converged &= rep.converged
        series_res.append(rep.residual)
        term_norms.append([tm.norm for tm in rep.terms])
        id_res.append(float(np.linalg.norm(rep.total - f)))
        for nu, tn, pn, tl in rep.rows():
            series_rows.append((t, nu, tn, pn, tl, rep.residual))
        if "series" in want:
            add(f"series_converged[t={t:g}]", "abel_sum", rep.converged, rep.residual, 1e-6 * fnorm)
    info["orientation"] = contour.ORIENTATION
    info["identity_residual"] = {f"{t:g}": r for t, r in zip(t_grid, id_res)}
    with open(out_dir / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "nu", "term_norm", "partial_sum_norm", "tail", "residual"])
        w.writerows([[repr(float(x)) if isinstance(x, float) else x for x in row] for row in series_rows])
    evo = abel_sum.evolution_solution(A, alpha, t_grid, f, rs)
    with open(out_dir / "evolution.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u_norm", "identity_residual", "residual_vs_oracle"])
        for (t, _, un, ro), ir in zip(evo, id_res):
            w.writerow([repr(t), repr(un), repr(ir), repr(ro)])
    if "identity" in want:
        mono = all(b >= a * (1 - 1e-9) for a, b in zip(id_res, id_res[1:]))
        add("identity_monotone", "abel_sum", mono, id_res[0] / fnorm, 1.0)
        if t_grid[0] <= 1e-6:
            add("identity_recovery", "abel_sum", id_res[0] <= 1e-4 * fnorm, id_res[0], 1e-4 * fnorm)

    # envelopes
    worst_margin = math.inf
    if "ray_bound" in want:
        ray = contour.ray_bound_check(A, sector)
        info["ray_bound"] = {"skipped": ray.skipped, "diagnostic": ray.diagnostic, "max_ratio": ray.max_ratio}
        if not ray.skipped:
            add("ray_resolvent_bound", "contour", ray.violations == 0, ray.max_ratio, 1.0)
            worst_margin = min(worst_margin, 1.0 - ray.max_ratio)
    if "arc_bound" in want:
        arcs = contour.arc_bound_check(A, plan, alpha, phi=sector.opening)
        lm = min(r.log_margin for r in arcs)
        add("arc_envelope", "contour", all(r.violations == 0 for r in arcs), lm, 0.0)
        worst_margin = min(worst_margin, lm)
    info["worst_bound_margin"] = worst_margin

    # determinants
    lam_samples = [0.0] + [r * np.exp(1j * a) for r in (plan.R_tilde[0], plan.R_tilde[-1])
                           for a in np.linspace(-np.pi, np.pi, 8, endpoint=False)]
    if "determinant" in want:
        d0 = entire_bounds.fredholm_det_product(A, 0.0)
        add("det_at_zero", "entire_bounds", d0 == 1, abs(d0 - 1), 0.0)
        rel = 0.0
        for lam in lam_samples:
            dp = entire_bounds.fredholm_det_product(A, lam)
            ref = entire_bounds.fredholm_det_minors(A, lam) if A.shape[0] <= 10 else np.linalg.det(np.eye(A.shape[0]) - lam * A)
            rel = max(rel, abs(dp - ref) / max(abs(ref), 1e-300))
        add("det_routes", "entire_bounds", rel <= 1e-10, rel, 1e-10)
        up = max(abs(entire_bounds.fredholm_det_product(A, lam)) / entire_bounds.canonical_upper(A, lam)
                 for lam in lam_samples)
        add("det_upper_envelope", "entire_bounds", up <= 1 + 1e-12, up, 1.0)
        entire_bounds.write_determinant_csv(out_dir / "determinant.csv", A, lam_samples, plan)
    if "cartan" in want:
        cr = entire_bounds.cartan_lower_check(A, plan)
        add("cartan_lower", "entire_bounds", cr.far_violations == 0, cr.fraction, 1.0, hard=False)

    # counting
    if "counting" in want:
        for m in (1, 2):
            pc = counting.power_counting_check(A, m)
            add(f"power_counting[m={m}]", "counting", pc.satisfied, pc.min_slack, 0)
        s = np.linalg.svd(A, compute_uv=False)
        prof = counting.CountingProfile.from_singular_values(s)
        if s.size >= 16:
            info["convergence_exponent"] = counting.convergence_exponent(s).rho
        r_vals = np.geomspace(0.5 * prof.thresholds[0], 2 * prof.thresholds[-1], 40)
        counting.write_counting_table(out_dir / "counting.csv", prof, r_vals, alpha)

    # split
    split_info = None
    if sc.split.enabled and "split" in want:
        sp = clustering.split_counting(plan.sizes(), sc.split.gamma, sc.split.beta_exp, sc.split.eta_inv, window=None)
        subs = clustering.assign_suboperators(A, rs, plan, sp)
        clustering.export_plans(out_dir / "plan.json", plan, sp, subs)
        ident, regroup, decay_at = [], [], None
        rows = []
        for t in t_grid:
            rep = abel_sum.split_series(A, rs, plan, sp, sc.split.alpha_low, t, f, sector, subs=subs)
            ident.append(rep.identity_residual)
            regroup.append(rep.regroup_error)
            decay_at = rep
            for a, k in enumerate(rep.sub_ids):
                for nu, v in enumerate(rep.term_norms[a]):
                    rows.append((t, k, nu, float(v)))
        add("split_regroup_agreement", "abel_sum", max(regroup) <= 1e-8 * fnorm, max(regroup), 1e-8 * fnorm)
        mono = all(b >= a for a, b in zip(ident, ident[1:]))
        add("split_identity_monotone", "abel_sum", mono, ident[0] / fnorm, 1.0)
        add("split_tails_decay", "abel_sum", decay_at.tails_decay, float(decay_at.tails_nu[-1]), 0.0, hard=False)
        split_info = {"counts": [list(r) for r in sp.counts], "sub_operators": decay_at.sub_ids,
                      "regroup_error": regroup, "identity_residual": ident}
        with open(out_dir / "split.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "k", "nu", "term_norm"])
            w.writerows([[repr(t), k, nu, repr(v)] for t, k, nu, v in rows])
        if figures:
            plots.plot_split(out_dir / "split.png", decay_at.term_norms, decay_at.sub_ids)
    else:
        clustering.export_plans(out_dir / "plan.json", plan)

    if figures:
        plots.plot_contour(out_dir / "contour.png", path, chars, plan.R_tilde)
        plots.plot_terms(out_dir / "terms.png", t_grid, term_norms)
        plots.plot_identity(out_dir / "identity.png", t_grid, np.array(id_res) / fnorm)

    info["converged"] = bool(all_converged)
    info["max_series_residual"] = float(np.nanmax(series_res)) if np.any(np.isfinite(series_res)) else math.nan
    summary = {
        "summary_version": SUMMARY_VERSION,
        "scenario": sc.name,
        "seed": seed,
        "info": info,
        "split": split_info,
        "checks": [c.to_dict() for c in checks],
        "passed": all(c.passed for c in checks if c.hard),
    }
    summary = _clean(summary)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return RunResult(summary, checks)
