import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abel_lab.abel_sum import cluster_term
from abel_lab.clustering import choose_all_radii, find_gap_subsequence, plan_from_root_system
from abel_lab.contour import (
    ORIENTATION,
    arc_bound_check,
    build_contour,
    closed_sector_loop,
    contour_integral,
    ray_bound_check,
    resolvent_apply,
    winding_number,
)
from abel_lab.errors import ContourProximityError, ValidationError
from abel_lab.operator_lab import SectorSpec, build_jordan, random_similarity

SECTOR = SectorSpec(0.3, 0.2)


def test_one_ring_four_segments_winding():
    path = build_contour(SECTOR, 0.1, [2.0])
    assert len(path.segments) == 4 and path.closed
    assert abs(winding_number(path, 1.0) - 1) < 1e-10
    assert abs(winding_number(path, 3.0)) < 1e-10
    assert ORIENTATION.startswith("counterclockwise")


def test_nearly_vertical_rays():
    sec = SectorSpec(0.5, math.pi / 2 - 0.01 - 0.5)
    path = build_contour(sec, 0.5, [3.0])
    _, lam, _ = path.nodes()
    assert np.all(lam.real >= np.abs(lam) * math.cos(sec.opening) * (1 - 1e-12))
    assert np.all(lam.real > 0)


def test_empty_radii_gives_open_sector():
    path = build_contour(SECTOR, 0.1)
    kinds = sorted(s.kind for s in path.segments)
    assert kinds == ["arc", "ray", "ray"] and any(s.infinite for s in path.segments)


def test_inner_radius_must_clear_spectrum():
    with pytest.raises(ValidationError):
        build_contour(SECTOR, 2.0, [5.0], char_numbers=[1.5])


def test_resolvent_examples(rng):
    f = rng.standard_normal(3)
    assert np.array_equal(resolvent_apply(np.eye(3), 0.0, f), f)
    assert np.allclose(resolvent_apply(np.diag([2.0]), 0.25, [1.0]), [2.0])
    A = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    lam = 0.3 + 0.2j
    x = resolvent_apply(A, lam, f.tolist() + [0] * 5)
    assert np.linalg.norm((np.eye(8) - lam * A) @ x - np.r_[f, np.zeros(5)]) < 1e-12


def test_resolvent_proximity():
    with pytest.raises(ContourProximityError):
        resolvent_apply(np.diag([0.5, 2.0]), 2.0, np.ones(2))


def test_rank_one_residue():
    e = np.array([1.0, 0.0])
    B = np.diag([1.0, 0.1])
    ring = closed_sector_loop(0.5, 2.0, SECTOR.opening)
    for t in (0.3, 1.0):
        u = contour_integral(B, e, ring, 1.0, t)
        assert np.linalg.norm(u - math.exp(-t) * e) < 1e-10


def test_ring_without_singularity_on_f():
    B = np.diag([1.0, 0.1])
    ring = closed_sector_loop(0.5, 2.0, SECTOR.opening)
    assert np.linalg.norm(contour_integral(B, np.array([0.0, 1.0]), ring, 1.0, 1.0)) < 1e-9


def test_jordan_block_matches_closed_form():
    op, rs = build_jordan([(1.0, 2)])
    f = rs.chains[0].vectors[:, 1]
    ring = closed_sector_loop(0.5, 2.0, SECTOR.opening)
    for t in (0.1, 1.0):
        quad = contour_integral(op.matrix, f, ring, 1.0, t)
        assert np.linalg.norm(quad - cluster_term(rs, [0], f, 1.0, t).value) < 1e-8


def test_ray_bound_selfadjoint_imaginary_axis():
    sec = SectorSpec(1e-9, math.pi / 2 - 2e-9)
    rep = ray_bound_check(np.diag([1.0, 0.5, 0.2]), sec)
    assert not rep.skipped and rep.violations == 0 and rep.max_ratio <= 1 + 1e-12


def test_ray_bound_normal_phases():
    ph = math.pi / 6 * (-1.0) ** np.arange(8)
    B = np.diag(np.exp(1j * ph) / np.arange(1, 9))
    rep = ray_bound_check(B, SectorSpec(math.pi / 6, math.pi / 12))
    assert not rep.skipped and rep.points == 100 and rep.violations == 0


def test_ray_bound_is_sharp_for_edge_eigenvalue():
    theta, eps = 0.4, 0.3
    B = np.diag([np.exp(-1j * theta), 0.0])
    # the ratio peaks where |lambda| = cos(psi) / |mu|
    radii = np.r_[np.geomspace(0.05, 50, 99), math.cos(eps)]
    rep = ray_bound_check(B, SectorSpec(theta, eps), samples=200, radii=radii)
    assert rep.violations == 0 and abs(rep.max_ratio - 1) < 1e-9
    far = ray_bound_check(B, SectorSpec(theta, eps), samples=2, radii=[1e6])
    assert abs(far.max_ratio - math.sin(eps)) < 1e-5


def test_ray_bound_skipped_outside_sector():
    rep = ray_bound_check(np.diag([1.0, 1j]), SECTOR)
    assert rep.skipped and "numerical range" in rep.diagnostic


def _well_separated():
    chars = np.array([1.0, 4.0, 16.0, 64.0])
    B = np.diag(1.0 / chars)
    plan = find_gap_subsequence(chars, 1.0, 1.0)
    return B, plan


def test_arc_envelope_mid_gap():
    B, plan = _well_separated()
    mids = plan.R * (1 - plan.delta / 2)
    res = arc_bound_check(B, plan, 1.0, radii=mids)
    assert all(r.violations == 0 and r.log_margin > 1 for r in res)


def test_arc_envelope_exact_hit_and_shrinking_margin():
    B, plan = _well_separated()
    res = arc_bound_check(B, plan, 1.0, radii=[4.0, 16.0, 64.0, 100.0])
    assert res[0].violations > 0
    margins = [arc_bound_check(B, plan, 1.0, radii=[4.0 + d, 16, 64, 100])[0].log_margin
               for d in (1e-1, 1e-3, 1e-5)]
    assert margins[0] > margins[1] > margins[2]


def test_scaling_identity(rng):
    A = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    c, lam = 3.7, 0.2 - 0.1j
    n1 = np.linalg.norm(np.linalg.inv(np.eye(5) - (lam / c) * (c * A)), 2)
    n0 = np.linalg.norm(np.linalg.inv(np.eye(5) - lam * A), 2)
    assert abs(n1 - n0) <= 1e-12 * n0


def _jordan_instance(seed):
    r = np.random.default_rng(seed)
    blocks = [(1.0, 2), (0.3 * np.exp(0.2j), 1), (0.08, 3)]
    op, rs = build_jordan(blocks, random_similarity(6, r, 30.0))
    plan = choose_all_radii(plan_from_root_system(rs, 1.0, 1.0), op.matrix, phi=SECTOR.opening)
    f = r.standard_normal(6) + 1j * r.standard_normal(6)
    return op, rs, plan, f


def test_closed_contour_additivity():
    op, rs, plan, f = _jordan_instance(3)
    full = build_contour(SECTOR, plan.inner_radius(), plan.R_tilde)
    whole = contour_integral(op.matrix, f, full, 1.0, 0.5, tol=1e-11)
    rings = sum(contour_integral(op.matrix, f, full.ring(nu), 1.0, 0.5, tol=1e-11) for nu in range(full.n_rings))
    assert np.linalg.norm(whole - rings) < 1e-8 * np.linalg.norm(f)


def test_deformation_invariance():
    op, rs, plan, f = _jordan_instance(4)
    nu = 0
    lo = plan.R[nu] * (1 - plan.delta[nu])
    a, b = plan.inner_radius(), plan.R_tilde[nu]
    shifted = 0.5 * (b + max(lo, plan.mu[plan.N[1] - 1]) + plan.margin(nu))
    u1 = contour_integral(op.matrix, f, closed_sector_loop(a, b, SECTOR.opening), 1.0, 0.5, tol=1e-11)
    u2 = contour_integral(op.matrix, f, closed_sector_loop(a, shifted, SECTOR.opening), 1.0, 0.5, tol=1e-11)
    assert np.linalg.norm(u1 - u2) < 1e-8 * np.linalg.norm(f)


@given(st.integers(0, 2**31), st.complex_numbers(max_magnitude=3), st.complex_numbers(max_magnitude=3))
def test_contour_integral_linear(seed, a, b):
    r = np.random.default_rng(seed)
    B = np.diag([1.0, 0.4, 0.1]) + 0.05 * r.standard_normal((3, 3))
    f1, f2 = r.standard_normal(3), r.standard_normal(3)
    ring = closed_sector_loop(0.5, 1.7, SECTOR.opening)
    u = contour_integral(B, a * f1 + b * f2, ring, 1.0, 0.7, tol=1e-12)
    v = a * contour_integral(B, f1, ring, 1.0, 0.7, tol=1e-12) + b * contour_integral(B, f2, ring, 1.0, 0.7, tol=1e-12)
    assert np.linalg.norm(u - v) <= 1e-9 * max(np.linalg.norm(v), np.linalg.norm(a * f1 + b * f2), 1e-300)
