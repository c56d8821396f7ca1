"""Classical distribution statistics the quantum testers reduce to.

Two workhorses:

* a Poissonized two-sample closeness statistic
  Z = sum_i [ (X_i - Y_i)^2 - X_i - Y_i ],  E[Z] = m^2 ||p - q||_2^2,
  thresholded at m^2 eps2^2 / 2 to distinguish ||p-q||_2 <= eps2/2 from
  ||p-q||_2 >= eps2 with m = O(b / eps2^2) Poissonized samples per side,
  where b bounds ||p||_2, ||q||_2;

* an unbiased U-statistic for the squared l2 distance from independence of
  a bivariate distribution, computed in closed form from collision counts
  (equivalent to averaging over all ordered 4-tuples of distinct samples,
  but O(samples + support) instead of O(n^4)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from mubtest.sampling import Counts, poissonized_counts
from mubtest.states import StateError


class SupportMismatch(StateError):
    """Two count vectors that must share a support do not."""


class BadEpsilon(StateError):
    """Distance parameter outside its valid range."""


class TooFewSamples(StateError):
    """The independence U-statistic needs at least 4 samples."""


Sampler = Callable[[float, np.random.Generator], Counts]
"""A Poissonized sampler: (m, rng) -> Counts with bin i ~ Poisson(m p_i)."""


@dataclass(frozen=True)
class ClosenessReport:
    """Outcome of one two-sample closeness test."""

    statistic: float
    threshold: float
    m: int
    verdict: str  # "Yes" (close) or "No" (far)

    def accepted(self) -> bool:
        return self.verdict == "Yes"


def cdvv_statistic(x: Counts, y: Counts) -> int:
    """Collision-corrected difference statistic of two Poissonized samples."""
    if x.n_bins != y.n_bins:
        raise SupportMismatch(f"support sizes differ: {x.n_bins} vs {y.n_bins}")
    xi = x.tallies.astype(object)  # exact integer arithmetic, no overflow
    yi = y.tallies.astype(object)
    diff = xi - yi
    return int(np.sum(diff * diff - xi - yi))


def closeness_budget(eps2: float, b: float, C: float) -> int:
    """Per-side Poisson parameter m = ceil(C * b / eps2^2)."""
    if eps2 <= 0:
        raise BadEpsilon(f"eps2 must be positive, got {eps2}")
    if b <= 0 or C <= 0:
        raise ValueError("norm bound b and constant C must be positive")
    return math.ceil(C * b / eps2**2)


def closeness_test(
    sample_p: Sampler,
    sample_q: Sampler,
    eps2: float,
    b: float,
    C: float,
    rng: np.random.Generator,
) -> ClosenessReport:
    """Distinguish ||p - q||_2 <= eps2/2 ("Yes") from >= eps2 ("No").

    Draws m = ceil(C b / eps2^2) Poissonized samples from each side and
    thresholds Z at m^2 eps2^2 / 2.  With b >= ||p||_2, ||q||_2 and C large
    enough the error probability is below 1/3 on both sides (C is a
    calibrated constant; see the defaults module).
    """
    m = closeness_budget(eps2, b, C)
    x = sample_p(float(m), rng)
    y = sample_q(float(m), rng)
    z = cdvv_statistic(x, y)
    threshold = m**2 * eps2**2 / 2.0
    verdict = "Yes" if z <= threshold else "No"
    return ClosenessReport(statistic=float(z), threshold=threshold, m=m, verdict=verdict)


def counts_sampler(p: np.ndarray) -> Sampler:
    """Wrap a fixed distribution as a Poissonized sampler."""
    arr = np.asarray(p, dtype=float)

    def sample(m: float, rng: np.random.Generator) -> Counts:
        return poissonized_counts(arr, m, rng)

    return sample


# ---------------------------------------------------------------------------
# Independence U-statistic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BivariateSamples:
    """Paired categorical samples (a_k, b_k) on [n_a] x [n_b]."""

    a: np.ndarray
    b: np.ndarray
    n_a: int
    n_b: int

    def __post_init__(self) -> None:
        a = np.asarray(self.a, dtype=np.int64)
        b = np.asarray(self.b, dtype=np.int64)
        if a.shape != b.shape or a.ndim != 1:
            raise SupportMismatch("a and b must be equal-length 1-d arrays")
        if a.size and (a.min() < 0 or a.max() >= self.n_a):
            raise SupportMismatch("a values out of range")
        if b.size and (b.min() < 0 or b.max() >= self.n_b):
            raise SupportMismatch("b values out of range")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return int(self.a.size)


def collision_counts_from_table(table: np.ndarray) -> tuple[int, int, int, int]:
    """Ordered-tuple collision counts from a contingency table.

    Returns (F11, CT2, Q4, N) where
    F11  counts ordered pairs (k, l), k != l, matching in both coordinates;
    CT2  counts ordered distinct triples (k, l, r) with a_k = a_l, b_k = b_r;
    Q4   counts ordered distinct 4-tuples (k, l, r, s) with a_k = a_l and
         b_r = b_s.

    Q4 subtracts the overlapping index configurations (2 F11 + 4 CT2) from
    the product of the marginal pair counts.
    """
    table = np.asarray(table)
    if table.ndim != 2:
        raise SupportMismatch("contingency table must be 2-d")
    row = table.sum(axis=1)
    col = table.sum(axis=0)
    tab = table.astype(object)
    rowo = row.astype(object)
    colo = col.astype(object)
    f11 = int(np.sum(tab * (tab - 1)))
    g = int(np.sum(tab * (rowo[:, None] - 1) * (colo[None, :] - 1)))
    ct2 = g - f11
    pa = int(np.sum(rowo * (rowo - 1)))
    pb = int(np.sum(colo * (colo - 1)))
    q4 = pa * pb - 2 * f11 - 4 * ct2
    return f11, ct2, q4, int(table.sum())


def collision_counts(samples: BivariateSamples) -> tuple[int, int, int, int]:
    """(F11, CT2, Q4, N) collision counts of a paired sample."""
    table = np.zeros((samples.n_a, samples.n_b), dtype=np.int64)
    np.add.at(table, (samples.a, samples.b), 1)
    return collision_counts_from_table(table)


def combine_collision_counts(f11: int, ct2: int, q4: int, n: int) -> float:
    """U-statistic value from collision counts (shared by the test oracle)."""
    return (
        f11 / (n * (n - 1))
        - 2.0 * ct2 / (n * (n - 1) * (n - 2))
        + q4 / (n * (n - 1) * (n - 2) * (n - 3))
    )


def independence_l2_ustat(samples: BivariateSamples) -> float:
    """Unbiased estimate of || p_AB - p_A x p_B ||_2^2 from paired samples.

    Needs at least 4 samples (the estimator averages over 4-tuples of
    distinct indices).  Invariant under permuting the sample order.
    """
    if samples.n < 4:
        raise TooFewSamples(f"need >= 4 samples, got {samples.n}")
    return combine_collision_counts(*collision_counts(samples))


def independence_l2_ustat_from_table(table: np.ndarray) -> float:
    """Same U-statistic, computed from a prebuilt contingency table."""
    f11, ct2, q4, n = collision_counts_from_table(table)
    if n < 4:
        raise TooFewSamples(f"need >= 4 samples, got {n}")
    return combine_collision_counts(f11, ct2, q4, n)


# ---------------------------------------------------------------------------
# Exact references (used by planting, budgets and tests)
# ---------------------------------------------------------------------------


def exact_l2(p: np.ndarray, q: np.ndarray) -> float:
    """||p - q||_2 for two explicit distributions on the same support."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise SupportMismatch(f"support sizes differ: {p.size} vs {q.size}")
    return float(np.linalg.norm(p - q))


def exact_independence_l2(p_joint: np.ndarray) -> float:
    """|| p_AB - p_A x p_B ||_2 for an explicit joint distribution (2-d array).

    The independence U-statistic estimates the *square* of this value.
    """
    p = np.asarray(p_joint, dtype=float)
    if p.ndim != 2:
        raise SupportMismatch("joint distribution must be a 2-d array")
    pa = p.sum(axis=1)
    pb = p.sum(axis=0)
    return float(np.linalg.norm(p - np.outer(pa, pb)))
