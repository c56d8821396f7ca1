import numpy as np
import pytest

from mubtest.sampling import (
    CollectiveOracleParams,
    Counts,
    EmptyDistribution,
    RngStream,
    TooFewCopies,
    collective_independence_oracle,
    collective_l2_identity_oracle,
    poissonize,
    poissonized_counts,
    sample_counts,
    swap_batch_estimate,
    swap_expectation_triple,
)
from mubtest.states import (
    SystemLayout,
    basis_state,
    l2_distance,
    maximally_entangled,
    maximally_mixed,
    product_of_marginals,
    random_mixed,
    tensor,
)


def test_rng_stream_reproducible_and_role_separated():
    a = RngStream(123, trial=7, role="fixture").generator().random(5)
    b = RngStream(123, trial=7, role="fixture").generator().random(5)
    c = RngStream(123, trial=7, role="tester").generator().random(5)
    d = RngStream(123, trial=8, role="fixture").generator().random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_rng_stream_child_roles_chain():
    s = RngStream(1, 2, "outer")
    assert s.child("inner").role == "outer/inner"
    assert RngStream(1).child("x").role == "x"


def test_counts_wrapper():
    c = Counts(np.array([3, 0, 2]))
    assert c.total == 5
    assert c.n_bins == 3
    with pytest.raises(ValueError):
        c.tallies[0] = 9


def test_sample_counts_deterministic_and_total():
    p = np.array([0.2, 0.3, 0.5])
    a = sample_counts(p, 1000, np.random.default_rng(42))
    b = sample_counts(p, 1000, np.random.default_rng(42))
    assert np.array_equal(a.tallies, b.tallies)
    assert a.total == 1000


def test_sample_counts_matches_distribution():
    p = np.array([0.2, 0.3, 0.5])
    n = 200_000
    c = sample_counts(p, n, np.random.default_rng(7))
    freq = c.tallies / n
    # 4 sigma on each bin
    assert np.all(np.abs(freq - p) < 4 * np.sqrt(p * (1 - p) / n))


def test_sample_counts_edge_cases():
    with pytest.raises(EmptyDistribution):
        sample_counts(np.array([]), 5, np.random.default_rng(0))
    with pytest.raises(EmptyDistribution):
        sample_counts(np.zeros(3), 5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_counts(np.array([1.0]), -1, np.random.default_rng(0))
    z = sample_counts(np.array([0.5, 0.5]), 0, np.random.default_rng(0))
    assert z.total == 0


def test_poissonize_mean():
    rng = np.random.default_rng(11)
    draws = [poissonize(50.0, rng) for _ in range(4000)]
    assert np.mean(draws) == pytest.approx(50.0, abs=4 * np.sqrt(50 / 4000))
    with pytest.raises(ValueError):
        poissonize(-1.0, rng)


def test_poissonized_counts_bin_means():
    p = np.array([0.1, 0.4, 0.5])
    m = 80.0
    rng = np.random.default_rng(13)
    reps = 3000
    acc = np.zeros(3)
    for _ in range(reps):
        acc += poissonized_counts(p, m, rng).tallies
    mean = acc / reps
    assert np.all(np.abs(mean - m * p) < 4 * np.sqrt(m * p / reps))


def test_poissonized_counts_bins_uncorrelated():
    # the whole point of Poissonization: joint counts are independent
    p = np.array([0.5, 0.5])
    m = 20.0
    rng = np.random.default_rng(17)
    xs = np.array([poissonized_counts(p, m, rng).tallies for _ in range(6000)])
    cov = np.cov(xs.T)
    assert abs(cov[0, 1]) < 0.05 * m  # multinomial would give -m/4 = -5


def test_swap_expectation_triple_maximally_entangled():
    lay = SystemLayout([2, 2])
    e1, e2, e3 = swap_expectation_triple(maximally_entangled(2), lay)
    assert (e1, e2, e3) == pytest.approx((1.0, 0.25, 0.25), abs=1e-12)
    assert e1 - 2 * e2 + e3 == pytest.approx(0.75, abs=1e-12)


def test_swap_expectation_triple_maximally_mixed():
    lay = SystemLayout([2, 2])
    triple = swap_expectation_triple(maximally_mixed(4), lay)
    assert triple == pytest.approx((0.25, 0.25, 0.25), abs=1e-12)


def test_swap_batch_estimate_pure_product_is_exactly_zero():
    lay = SystemLayout([2, 2])
    z00 = tensor(basis_state(2, 0), basis_state(2, 1))
    for seed in (0, 1, 2):
        est = swap_batch_estimate(z00, lay, 40, np.random.default_rng(seed))
        assert est == 0.0


def test_swap_batch_estimate_unbiased_on_bell():
    lay = SystemLayout([2, 2])
    bell = maximally_entangled(2)
    rng = np.random.default_rng(23)
    reps = 400
    vals = [swap_batch_estimate(bell, lay, 4 * 50, rng) for _ in range(reps)]
    se = np.sqrt(6.0 / 50 / reps)
    assert np.mean(vals) == pytest.approx(0.75, abs=4 * se)


def test_swap_batch_estimate_requires_four_copies():
    lay = SystemLayout([2, 2])
    with pytest.raises(TooFewCopies):
        swap_batch_estimate(maximally_mixed(4), lay, 3, np.random.default_rng(0))


def test_oracle_params_contract():
    with pytest.raises(ValueError):
        CollectiveOracleParams(c_mean_bias=0.1)
    with pytest.raises(ValueError):
        CollectiveOracleParams(c_var_lin=-1.0)
    p = CollectiveOracleParams(c_var_lin=2.0, c_var_quad=3.0)
    assert p.variance(0.5, 10) == pytest.approx(2.0 * 0.5 / 10 + 3.0 / 100)
    # small-n rule: declared bound is the flat cap below 12 copies
    assert p.declared_bound(0.5, 8, small_n_rule=True) == 100.0
    assert p.declared_bound(0.5, 12, small_n_rule=True) == p.variance(0.5, 12)
    assert p.declared_bound(0.5, 8, small_n_rule=False) == p.variance(0.5, 8)


def test_identity_oracle_moments_and_clip():
    rng = np.random.default_rng(31)
    a = basis_state(2, 0)
    b = basis_state(2, 1)
    e = l2_distance(a, b) ** 2
    assert e == pytest.approx(2.0, abs=1e-12)
    n = 16
    draws = np.array([collective_l2_identity_oracle(a, b, n, rng) for _ in range(4000)])
    assert np.all(draws <= 4.0) and np.all(draws >= -4.0)
    var = CollectiveOracleParams().variance(e, n)
    assert draws.mean() == pytest.approx(e, abs=4 * np.sqrt(var / 4000))
    assert draws.var() == pytest.approx(var, rel=0.15)


def test_independence_oracle_mean():
    rng = np.random.default_rng(37)
    lay = SystemLayout([2, 2])
    bell = maximally_entangled(2)
    e = l2_distance(bell, product_of_marginals(bell, lay)) ** 2
    assert e == pytest.approx(0.75, abs=1e-12)
    n = 25
    draws = np.array(
        [collective_independence_oracle(bell, lay, n, rng) for _ in range(3000)]
    )
    var = CollectiveOracleParams().variance(e, n)
    assert draws.mean() == pytest.approx(e, abs=4 * np.sqrt(var / 3000))


def test_oracles_require_four_copies():
    rng = np.random.default_rng(41)
    with pytest.raises(TooFewCopies):
        collective_l2_identity_oracle(
            maximally_mixed(2), maximally_mixed(2), 3, rng
        )
    with pytest.raises(TooFewCopies):
        collective_independence_oracle(
            maximally_mixed(4), SystemLayout([2, 2]), 2, rng
        )


def test_oracle_respects_variance_params():
    rng = np.random.default_rng(43)
    rho = maximally_mixed(2)
    params = CollectiveOracleParams(c_var_lin=0.0, c_var_quad=0.0)
    # zero variance: every draw equals the exact squared distance
    for _ in range(5):
        assert collective_l2_identity_oracle(rho, rho, 10, rng, params) == 0.0
