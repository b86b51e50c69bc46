import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abel_lab.errors import SpecParseError, ValidationError
from abel_lab.operator_lab import (
    SectorSpec,
    build_from_polar,
    build_jordan,
    build_sectorial_example,
    jordan_matrix,
    load_spec,
    random_similarity,
    random_unitary,
    save_spec,
    worked_singular_values,
)
from abel_lab.counting import convergence_exponent
from abel_lab.spectral import numerical_range_max_arg


def test_polar_rank_one_projector():
    u = np.array([1.0, 1j, 0.0]) / math.sqrt(2)
    op = build_from_polar([1.0], u, u)
    assert np.allclose(op.matrix, np.outer(u, u.conj()), atol=1e-15)
    assert np.allclose(op.matrix @ u, u)


def test_polar_worked_sequence_has_target_exponent():
    s = worked_singular_values(1.5, 64)
    op = build_from_polar(s, np.eye(64), np.eye(64))
    assert np.allclose(op.matrix, np.diag(s))
    # convergence exponent of the generating sequence (1024 terms for a stable fit)
    assert abs(convergence_exponent(worked_singular_values(1.5, 1024)).rho - 1.5) <= 0.1


def test_polar_rotated_right_family_keeps_singular_values(rng):
    G = random_unitary(2, rng)
    op = build_from_polar([2.0, 1.0], np.eye(2), G)
    assert np.allclose(np.linalg.svd(op.matrix, compute_uv=False), [2.0, 1.0], rtol=1e-10)


def test_polar_rejects_non_orthonormal_family():
    E = np.array([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(ValidationError):
        build_from_polar([2.0, 1.0], E, np.eye(2))


def test_sectorial_zero_phases_is_positive_diagonal():
    op = build_sectorial_example(1.5, 8, 0.3, 0.0)
    assert np.allclose(op.matrix, np.diag(np.diag(op.matrix)).real)
    assert numerical_range_max_arg(op, 300) <= 1e-12


def test_sectorial_alternating_phases_stay_in_sector():
    theta = math.pi / 6
    phases = theta * (-1.0) ** np.arange(16)
    op = build_sectorial_example(1.5, 16, theta, phases)
    assert numerical_range_max_arg(op, 200) <= theta + 1e-9


def test_sectorial_phase_outside_sector_rejected():
    with pytest.raises(ValidationError):
        build_sectorial_example(1.5, 4, math.pi / 8, [0, 0, math.pi / 4, 0])


def test_jordan_single_entry():
    op, rs = build_jordan([(1.0, 1)])
    assert op.matrix.shape == (1, 1) and op.matrix[0, 0] == 1


def test_jordan_canonical_block_and_chain():
    op, rs = build_jordan([(0.5, 2)])
    assert np.array_equal(op.matrix, np.array([[0.5, 1.0], [0.0, 0.5]]))
    E = rs.chains[0].vectors
    assert np.array_equal(E[:, 0], [1, 0]) and np.array_equal(E[:, 1], [0, 1])


def test_jordan_similarity_eigenvalues(rng):
    S = random_similarity(3, rng, cond=5.0)
    op, _ = build_jordan([(1.0, 2), (0.25, 1)], S)
    ev = np.sort_complex(np.linalg.eigvals(op.matrix))
    # a defective pair splits like sqrt(eps), hence the looser gauge on the double root
    assert abs(ev[0] - 0.25) < 1e-8
    assert np.all(np.abs(ev[1:] - 1.0) < 1e-6)
    assert abs(np.sum(ev[1:]) - 2.0) < 1e-8


def test_jordan_rejects_zero_eigenvalue():
    with pytest.raises(ValidationError):
        build_jordan([(0.0, 1)])


def test_save_load_round_trip(tmp_path, rng):
    op, _ = build_jordan([(1.0, 2), (0.3 + 0.1j, 1)], random_similarity(3, rng, 4.0))
    polar = build_sectorial_example(1.5, 5, 0.4, [0.1, -0.2, 0.3, 0, 0.05])
    for k, o in enumerate((op, polar)):
        p = tmp_path / f"op{k}.json"
        save_spec(o, p)
        back = load_spec(p)
        assert np.max(np.abs(back.matrix - o.matrix)) <= 1e-15
        assert back.metadata.kind == o.metadata.kind


def test_load_truncated_file(tmp_path):
    op, _ = build_jordan([(1.0, 2)])
    p = tmp_path / "op.json"
    save_spec(op, p)
    p.write_text(p.read_text()[:40])
    with pytest.raises(SpecParseError):
        load_spec(p)


def test_load_non_orthonormal_declared_basis(tmp_path):
    op = build_from_polar([2.0, 1.0], np.eye(2), np.eye(2))
    p = tmp_path / "op.json"
    save_spec(op, p)
    doc = json.loads(p.read_text())
    doc["left_basis"] = [[[1, 0], [1, 0]], [[0, 0], [1, 0]]]
    p.write_text(json.dumps(doc))
    with pytest.raises(ValidationError):
        load_spec(p)


def test_sector_spec_order_constraint():
    sec = SectorSpec(0.3, 0.2)
    sec.check_order(1.0)
    with pytest.raises(ValidationError, match="sector constraint"):
        sec.check_order(4.0)


@given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=8), st.integers(0, 2**31))
def test_polar_singular_values_reproduced(s, seed):
    s = np.sort(np.array(s))[::-1]
    r = np.random.default_rng(seed)
    n = s.size
    op = build_from_polar(s, random_unitary(n, r), random_unitary(n, r))
    sv = np.linalg.svd(op.matrix, compute_uv=False)
    assert np.allclose(sv, s, rtol=1e-10, atol=0)


@given(st.lists(st.tuples(st.complex_numbers(min_magnitude=0.1, max_magnitude=5), st.integers(1, 3)),
                min_size=1, max_size=4))
def test_identity_similarity_gives_canonical_blocks(blocks):
    op, _ = build_jordan(blocks)
    assert np.array_equal(op.matrix, jordan_matrix(blocks))


@given(st.lists(st.floats(-0.5, 0.5), min_size=4, max_size=10), st.floats(0.0, 1.0))
def test_shrinking_phases_never_widens_range(phases, shrink):
    phases = np.array(phases)
    n = phases.size
    wide = build_sectorial_example(1.5, n, 0.6, phases)
    narrow = build_sectorial_example(1.5, n, 0.6, shrink * phases)
    assert numerical_range_max_arg(narrow, 200) <= numerical_range_max_arg(wide, 200) + 1e-12
