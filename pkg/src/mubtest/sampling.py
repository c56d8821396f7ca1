"""Randomness plumbing and measurement simulation primitives.

Design notes
------------
* Every random object derives from an explicit ``RngStream`` (root seed,
  trial index, role tag) so experiment rows are reproducible independent of
  execution order.  Role tags hash through crc32, which is stable across
  processes (unlike builtin ``hash``).
* Poissonized sampling draws per-bin independent Poisson counts directly;
  that is exactly the joint law of "draw N ~ Poisson(m), then N samples".
* The collective-measurement estimators for squared Hilbert-Schmidt
  distances are simulated through their published mean/variance contract
  (exact mean, variance c_lin * e / n + c_quad / n^2) as a clipped Gaussian
  on [-4, 4]; a squared l2 distance between states never exceeds 2, so the
  clip only trims unreachable tails (bias far below the contract
  tolerance).  The swap-circuit batch estimator below is the physically
  grounded cross-check with the same mean.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from mubtest.states import (
    DensityMatrix,
    StateError,
    SystemLayout,
    l2_distance,
    marginals,
    product_of_marginals,
    purity,
)


class EmptyDistribution(StateError):
    """Sampling from a zero/empty probability vector."""


class TooFewCopies(StateError):
    """A collective estimator needs at least 4 copies."""


@dataclass(frozen=True)
class RngStream:
    """Deterministic generator factory: (root_seed, trial, role) -> Generator."""

    root_seed: int
    trial: int = 0
    role: str = ""

    def generator(self) -> np.random.Generator:
        tag = zlib.crc32(self.role.encode("utf-8"))
        seq = np.random.SeedSequence(self.root_seed, spawn_key=(self.trial, tag))
        return np.random.default_rng(seq)

    def child(self, role: str) -> "RngStream":
        suffix = f"{self.role}/{role}" if self.role else role
        return RngStream(self.root_seed, self.trial, suffix)


@dataclass(frozen=True)
class Counts:
    """Outcome tallies of a sampling run."""

    tallies: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.tallies, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "tallies", arr)

    @property
    def total(self) -> int:
        return int(self.tallies.sum())

    @property
    def n_bins(self) -> int:
        return int(self.tallies.size)


def _checked_pvector(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0:
        raise EmptyDistribution("empty probability vector")
    if np.any(p < -1e-12):
        raise EmptyDistribution(f"negative probability {p.min()!r}")
    s = p.sum()
    if s <= 0:
        raise EmptyDistribution("probability vector sums to zero")
    return np.maximum(p, 0.0) / s


def sample_counts(p: np.ndarray, n: int, rng: np.random.Generator) -> Counts:
    """Draw n iid samples from p (inverse CDF) and tally them."""
    probs = _checked_pvector(p)
    if n < 0:
        raise ValueError(f"sample size must be nonnegative, got {n}")
    if n == 0:
        return Counts(np.zeros(probs.size, dtype=np.int64))
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, rng.random(n), side="right")
    return Counts(np.bincount(idx, minlength=probs.size))


def poissonize(m: float, rng: np.random.Generator) -> int:
    """Draw the randomized sample size N ~ Poisson(m)."""
    if m < 0:
        raise ValueError(f"Poisson parameter must be nonnegative, got {m}")
    return int(rng.poisson(m))


def poissonized_counts(p: np.ndarray, m: float, rng: np.random.Generator) -> Counts:
    """Counts of a Poissonized run: bin i gets an independent Poisson(m p_i).

    Equivalent to drawing N ~ Poisson(m) first and then N iid samples from p;
    drawing per-bin directly is one vectorized call.
    """
    probs = _checked_pvector(p)
    if m < 0:
        raise ValueError(f"Poisson parameter must be nonnegative, got {m}")
    return Counts(rng.poisson(m * probs).astype(np.int64))


# ---------------------------------------------------------------------------
# Swap-circuit batch estimator for || rho - rho_1 x rho_2 ||_2^2
# ---------------------------------------------------------------------------


def swap_expectation_triple(
    rho: DensityMatrix, layout: SystemLayout
) -> tuple[float, float, float]:
    """(tr rho^2, tr[rho (rho_1 x rho_2)], tr rho_1^2 tr rho_2^2) for a
    bipartite state; its alternating sum is || rho - rho_1 x rho_2 ||_2^2."""
    if layout.parties != 2:
        raise StateError(f"expected a bipartite layout, got {layout.dims}")
    layout.check(rho)
    prod = product_of_marginals(rho, layout)
    e1 = purity(rho)
    e2 = float(np.real(np.trace(rho.mat @ prod.mat)))
    m1, m2 = marginals(rho, layout)
    e3 = purity(m1) * purity(m2)
    return e1, e2, e3


def swap_batch_estimate(
    rho: DensityMatrix, layout: SystemLayout, n_copies: int, rng: np.random.Generator
) -> float:
    """Estimate || rho - rho_1 x rho_2 ||_2^2 from swap-circuit outcomes.

    Each batch consumes 4 copies and yields three independent +-1 outcomes
    o_k with P(o_k = +1) = (1 + e_k)/2 for the expectation triple above; the
    batch estimate o_1 - 2 o_2 + o_3 is unbiased with variance at most 6.
    On a pure product state every outcome is +1 and the estimate is exactly
    zero.  Raises TooFewCopies below one full batch.
    """
    if n_copies < 4:
        raise TooFewCopies(f"need at least 4 copies, got {n_copies}")
    batches = n_copies // 4
    e = np.array(swap_expectation_triple(rho, layout))
    ones = rng.binomial(batches, np.clip((1.0 + e) / 2.0, 0.0, 1.0))
    # mean of +-1 outcomes per observable
    o = (2.0 * ones - batches) / batches
    return float(o[0] - 2.0 * o[1] + o[2])


# ---------------------------------------------------------------------------
# Collective-measurement distance estimators (contract-level simulation)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollectiveOracleParams:
    """Moment contract of the collective squared-l2-distance estimators.

    mean bias is identically zero (the estimators are unbiased); the field
    exists so tests can state that explicitly.  Variance realized as
    c_var_lin * e / n + c_var_quad / n^2; for independence estimates with
    4 <= n < 12 the *declared* bound is the flat small_n_cap instead.
    """

    c_mean_bias: float = 0.0
    c_var_lin: float = 1.0
    c_var_quad: float = 1.0
    small_n_cap: float = 100.0

    def __post_init__(self) -> None:
        if self.c_mean_bias != 0.0:
            raise ValueError("the collective estimators are unbiased: c_mean_bias must be 0")
        if self.c_var_lin < 0 or self.c_var_quad < 0 or self.small_n_cap <= 0:
            raise ValueError("variance coefficients must be nonnegative")

    def variance(self, e: float, n: int) -> float:
        return self.c_var_lin * e / n + self.c_var_quad / n**2

    def declared_bound(self, e: float, n: int, small_n_rule: bool = False) -> float:
        if small_n_rule and n < 12:
            return self.small_n_cap
        return self.variance(e, n)


DEFAULT_ORACLE = CollectiveOracleParams()

_CLIP = 4.0  # estimates live in [-4, 4]; true values in [0, 2]


def _collective_draw(
    e: float, n: int, rng: np.random.Generator, params: CollectiveOracleParams
) -> float:
    if n < 4:
        raise TooFewCopies(f"collective estimator needs n >= 4, got {n}")
    sd = float(np.sqrt(params.variance(e, n)))
    return float(np.clip(rng.normal(e, sd), -_CLIP, _CLIP))


def collective_l2_identity_oracle(
    rho: DensityMatrix,
    sigma: DensityMatrix,
    n: int,
    rng: np.random.Generator,
    params: CollectiveOracleParams = DEFAULT_ORACLE,
) -> float:
    """One collective estimate of || rho - sigma ||_2^2 from n copies of each."""
    return _collective_draw(l2_distance(rho, sigma) ** 2, n, rng, params)


def collective_independence_oracle(
    rho: DensityMatrix,
    layout: SystemLayout,
    n: int,
    rng: np.random.Generator,
    params: CollectiveOracleParams = DEFAULT_ORACLE,
) -> float:
    """One collective estimate of || rho - rho_1 x rho_2 ||_2^2 from n copies."""
    if layout.parties != 2:
        raise StateError(f"expected a bipartite layout, got {layout.dims}")
    layout.check(rho)
    e = l2_distance(rho, product_of_marginals(rho, layout)) ** 2
    return _collective_draw(e, n, rng, params)
