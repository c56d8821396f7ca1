import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mubtest import states
from mubtest.states import (
    BadLambda,
    BadRank,
    BadTrace,
    DensityMatrix,
    DimMismatch,
    LayoutMismatch,
    NotHermitian,
    NotPSD,
    StateError,
    SystemLayout,
    basis_state,
    distance_to_product,
    embed,
    ghz,
    interpolate_toward,
    l1_distance,
    l2_distance,
    marginals,
    maximally_entangled,
    maximally_mixed,
    partial_trace,
    product_of_marginals,
    purity,
    random_mixed,
    random_pure,
    state_from_json,
    state_to_json,
    tensor,
    validate,
)


def test_validate_accepts_maximally_mixed():
    rho = validate(np.eye(4) / 4)
    assert rho.dim == 4
    assert np.allclose(rho.mat, np.eye(4) / 4)


def test_validate_idempotent_on_valid_input():
    rng = np.random.default_rng(7)
    rho = random_mixed(5, 3, rng)
    again = validate(rho.mat)
    assert np.allclose(again.mat, rho.mat, atol=1e-12)


def test_validate_rejects_non_hermitian():
    m = np.array([[0.5, 0.1], [0.3, 0.5]], dtype=complex)
    with pytest.raises(NotHermitian):
        validate(m)


def test_validate_rejects_negative_eigenvalue():
    m = np.diag([1.2, -0.2]).astype(complex)
    with pytest.raises(NotPSD):
        validate(m)


def test_validate_rejects_bad_trace():
    with pytest.raises(BadTrace):
        validate(np.eye(2))


def test_validate_rejects_non_square_and_oversize():
    with pytest.raises(StateError):
        validate(np.zeros((2, 3)))
    with pytest.raises(StateError):
        validate(np.eye(512) / 512)


def test_validate_tolerance_boundary():
    # a 1e-10 Hermiticity blemish is within the 1e-9 validation tolerance
    m = np.eye(2, dtype=complex) / 2
    m[0, 1] = 1e-10j
    rho = validate(m)
    assert np.allclose(rho.mat, rho.mat.conj().T)


def test_density_matrix_is_immutable():
    rho = maximally_mixed(2)
    with pytest.raises((ValueError, AttributeError)):
        rho.mat[0, 0] = 9.0
    with pytest.raises(AttributeError):
        rho.mat = np.eye(2)


def test_layout_validation():
    lay = SystemLayout([2, 3])
    assert lay.total_dim == 6
    assert lay.parties == 2
    with pytest.raises(LayoutMismatch):
        SystemLayout([2, 1])
    with pytest.raises(LayoutMismatch):
        SystemLayout([])
    with pytest.raises(LayoutMismatch):
        lay.check(maximally_mixed(4))


def test_tensor_dimensions_and_values():
    a = basis_state(2, 0)
    b = maximally_mixed(3)
    ab = tensor(a, b)
    assert ab.dim == 6
    expect = np.zeros((6, 6))
    expect[:3, :3] = np.eye(3) / 3
    assert np.allclose(ab.mat, expect)


def test_partial_trace_recovers_factors():
    rng = np.random.default_rng(11)
    a = random_mixed(2, 2, rng)
    b = random_mixed(3, 1, rng)
    lay = SystemLayout([2, 3])
    ab = tensor(a, b)
    assert np.allclose(partial_trace(ab, lay, [0]).mat, a.mat, atol=1e-12)
    assert np.allclose(partial_trace(ab, lay, [1]).mat, b.mat, atol=1e-12)
    assert np.allclose(partial_trace(ab, lay, [0, 1]).mat, ab.mat, atol=1e-12)


def test_partial_trace_bell_marginal_is_maximally_mixed():
    bell = maximally_entangled(2)
    lay = SystemLayout([2, 2])
    for t in (0, 1):
        red = partial_trace(bell, lay, [t])
        assert np.allclose(red.mat, np.eye(2) / 2, atol=1e-12)


def test_partial_trace_three_parties_middle():
    rng = np.random.default_rng(3)
    parts = [random_mixed(2, 2, rng) for _ in range(3)]
    lay = SystemLayout([2, 2, 2])
    full = states.tensor_all(parts)
    mid = partial_trace(full, lay, [1])
    assert np.allclose(mid.mat, parts[1].mat, atol=1e-12)
    outer = partial_trace(full, lay, [0, 2])
    assert np.allclose(outer.mat, np.kron(parts[0].mat, parts[2].mat), atol=1e-12)


def test_partial_trace_argument_errors():
    lay = SystemLayout([2, 2])
    rho = maximally_mixed(4)
    with pytest.raises(LayoutMismatch):
        partial_trace(rho, lay, [])
    with pytest.raises(LayoutMismatch):
        partial_trace(rho, lay, [2])
    with pytest.raises(LayoutMismatch):
        partial_trace(maximally_mixed(5), lay, [0])


def test_distances_on_orthogonal_pure_states():
    z0 = basis_state(2, 0)
    z1 = basis_state(2, 1)
    assert l1_distance(z0, z1) == pytest.approx(2.0, abs=1e-12)
    assert l2_distance(z0, z1) == pytest.approx(np.sqrt(2.0), abs=1e-12)


def test_distance_pure_vs_maximally_mixed():
    # ||pure - I/d||_1 = 2 (1 - 1/d)
    for d in (2, 3, 4, 8):
        psi = basis_state(d, 0)
        assert l1_distance(psi, maximally_mixed(d)) == pytest.approx(
            2.0 * (1.0 - 1.0 / d), abs=1e-12
        )


def test_distance_dim_mismatch():
    with pytest.raises(DimMismatch):
        l1_distance(maximally_mixed(2), maximally_mixed(3))
    with pytest.raises(DimMismatch):
        l2_distance(maximally_mixed(2), maximally_mixed(3))


@given(st.integers(min_value=0, max_value=10**9))
@settings(max_examples=25, deadline=None)
def test_norm_sandwich_l2_le_l1_le_sqrtd_l2(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 9))
    a = random_mixed(d, int(rng.integers(1, d + 1)), rng)
    b = random_mixed(d, int(rng.integers(1, d + 1)), rng)
    l1 = l1_distance(a, b)
    l2 = l2_distance(a, b)
    assert l2 <= l1 + 1e-12
    assert l1 <= np.sqrt(d) * l2 + 1e-12
    assert l1 <= 2.0 + 1e-12


def test_partial_trace_contracts_trace_distance():
    rng = np.random.default_rng(21)
    lay = SystemLayout([2, 3])
    for _ in range(20):
        a = random_mixed(6, 4, rng)
        b = random_mixed(6, 6, rng)
        for keep in ([0], [1]):
            assert l1_distance(
                partial_trace(a, lay, keep), partial_trace(b, lay, keep)
            ) <= l1_distance(a, b) + 1e-12


def test_distance_to_product_zero_on_products():
    rng = np.random.default_rng(5)
    a = random_mixed(2, 2, rng)
    b = random_mixed(3, 2, rng)
    lay = SystemLayout([2, 3])
    assert distance_to_product(tensor(a, b), lay) <= 1e-9


def test_distance_to_product_maximally_entangled_qubits():
    # marginals of |Phi+> are I/2 each; || Phi - I/4 ||_1 = 3/4 + 3 * 1/4 = 3/2
    val = distance_to_product(maximally_entangled(2), SystemLayout([2, 2]))
    assert val == pytest.approx(1.5, abs=1e-12)


def test_distance_to_product_ghz_three_qubits():
    # GHZ marginals are I/2; || GHZ - I/8 ||_1 = 7/8 + 7 * 1/8 = 7/4
    val = distance_to_product(ghz(3), SystemLayout([2, 2, 2]))
    assert val == pytest.approx(1.75, abs=1e-12)


def test_marginals_and_product_shapes():
    rho = ghz(3)
    lay = SystemLayout([2, 2, 2])
    ms = marginals(rho, lay)
    assert [m.dim for m in ms] == [2, 2, 2]
    assert product_of_marginals(rho, lay).dim == 8


def test_purity_extremes():
    assert purity(basis_state(3, 1)) == pytest.approx(1.0, abs=1e-12)
    assert purity(maximally_mixed(4)) == pytest.approx(0.25, abs=1e-12)


def test_random_pure_is_pure_and_normalized():
    rng = np.random.default_rng(13)
    psi = random_pure(6, rng)
    assert np.real(np.trace(psi.mat)) == pytest.approx(1.0, abs=1e-12)
    assert purity(psi) == pytest.approx(1.0, abs=1e-12)


def test_random_mixed_rank_control():
    rng = np.random.default_rng(17)
    for rank in (1, 2, 4):
        rho = random_mixed(4, rank, rng)
        eigs = np.linalg.eigvalsh(rho.mat)
        assert np.sum(eigs > 1e-10) == rank
    with pytest.raises(BadRank):
        random_mixed(4, 0, rng)
    with pytest.raises(BadRank):
        random_mixed(4, 5, rng)


def test_interpolate_moves_trace_distance_linearly():
    rng = np.random.default_rng(19)
    rho = random_mixed(3, 3, rng)
    tau = random_pure(3, rng)
    full = l1_distance(rho, tau)
    for lam in (0.0, 0.25, 0.6, 1.0):
        sigma = interpolate_toward(rho, tau, lam)
        assert l1_distance(rho, sigma) == pytest.approx(lam * full, abs=1e-10)


def test_interpolate_rejects_bad_lambda_and_dims():
    rho = maximally_mixed(2)
    with pytest.raises(BadLambda):
        interpolate_toward(rho, rho, 1.5)
    with pytest.raises(BadLambda):
        interpolate_toward(rho, rho, -0.1)
    with pytest.raises(DimMismatch):
        interpolate_toward(rho, maximally_mixed(3), 0.5)


def test_embed_preserves_distances():
    rng = np.random.default_rng(23)
    lay = SystemLayout([3])
    a = random_mixed(3, 2, rng)
    b = random_mixed(3, 3, rng)
    ea = embed(a, lay, [4])
    eb = embed(b, lay, [4])
    assert np.real(np.trace(ea.mat)) == pytest.approx(1.0, abs=1e-12)
    assert l1_distance(ea, eb) == pytest.approx(l1_distance(a, b), abs=1e-10)
    assert l2_distance(ea, eb) == pytest.approx(l2_distance(a, b), abs=1e-10)


def test_embed_multiparty_and_errors():
    rng = np.random.default_rng(29)
    lay = SystemLayout([2, 3])
    rho = random_mixed(6, 3, rng)
    big = embed(rho, lay, [2, 4])
    assert big.dim == 8
    # marginal on the untouched party is unchanged
    red = partial_trace(big, SystemLayout([2, 4]), [0])
    assert np.allclose(red.mat, partial_trace(rho, lay, [0]).mat, atol=1e-12)
    with pytest.raises(LayoutMismatch):
        embed(rho, lay, [2, 2])
    with pytest.raises(LayoutMismatch):
        embed(rho, lay, [2, 3, 2])


def test_json_roundtrip():
    rng = np.random.default_rng(31)
    rho = random_mixed(4, 2, rng)
    lay = SystemLayout([2, 2])
    text = state_to_json(rho, lay)
    back, back_lay = state_from_json(text)
    assert back_lay.dims == (2, 2)
    assert np.allclose(back.mat, rho.mat, atol=1e-12)


def test_json_rejects_garbage():
    with pytest.raises(StateError):
        state_from_json('{"dims": [2]}')
    with pytest.raises(BadTrace):
        state_from_json('{"dims": [2], "re": [[1, 0], [0, 1]], "im": [[0,0],[0,0]]}')
