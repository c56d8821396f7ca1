"""Yes/No property testers for quantum states.

Every tester returns a :class:`Verdict` and draws its copies through
:class:`StateSource` objects, so the reported ``copies_used`` is an exact
audit of what was consumed from each physical state, including copies spent
on derived streams (marginals, products of marginals) which are charged to
their parent.

Measurement settings
--------------------
independent
    Each copy is measured separately by the single-system MUB POVM; the
    outcome distributions are compared with the Poissonized l2 closeness
    test.  Budgets scale as d^2/eps^2.
collective
    A joint measurement on all copies of one state, simulated through its
    published mean/variance contract (see ``sampling``).  Budgets d/eps^2.
local
    Per-party MUB measurements on each copy; the joint outcome distribution
    is an isometric image of the state up to subset terms, so closeness on
    the image decides the quantum property.
swap
    Swap-circuit outcome statistics; quartic in 1/eps, kept as a baseline.

Distance parameters here are trace-distance radii in (0, 2] unless the name
says ``eps2`` (Hilbert-Schmidt).  The experiment harness restricts
user-facing epsilon to (0, 1]; testers accept the full range because the
collection schedule probes doubled radii internally.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from mubtest import defaults
from mubtest.classical import (
    BadEpsilon,
    Sampler,
    closeness_budget,
    closeness_test,
    independence_l2_ustat_from_table,
)
from mubtest.mub import (
    LocalMubPovm,
    channel_probabilities,
    local_channel_probabilities,
    local_mub_povm,
    mub_family,
    pad_dim,
)
from mubtest.sampling import (
    CollectiveOracleParams,
    DEFAULT_ORACLE,
    RngStream,
    collective_independence_oracle,
    collective_l2_identity_oracle,
    poissonize,
    poissonized_counts,
    sample_counts,
)
from mubtest.states import (
    DensityMatrix,
    DimMismatch,
    LayoutMismatch,
    StateError,
    SystemLayout,
    embed,
    l1_distance,
    l2_distance,
    maximally_mixed,
    partial_trace,
    product_of_marginals,
)

SETTINGS = ("independent", "collective", "local", "swap")

#: Largest virtual collection produced by the weighted-to-uniform reduction.
MAX_VIRTUAL = 100_000


class BadSetting(StateError):
    """Unknown measurement setting."""


class BadWeights(StateError):
    """Collection weights violate the (C0, C1) bounds or blow up the
    virtual reduction."""


class NegativeInput(StateError):
    """Argument outside the nonnegative domain."""


# ---------------------------------------------------------------------------
# Configuration and verdicts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TesterConfig:
    """Calibrated constants and repetition policy shared by all testers.

    The defaults come from the calibration sweep recorded in ``defaults``;
    every knob can be overridden per invocation (CLI: --const-C / --const-L).
    ``seed`` is used only when a tester is called without an explicit
    RngStream.
    """

    closeness_C: float = defaults.CLOSENESS_C
    collective_C: float = defaults.COLLECTIVE_C
    swap_C: float = defaults.SWAP_C
    collection_L: float = defaults.COLLECTION_L
    condindep_L_collective: float = defaults.CONDINDEP_L_COLLECTIVE
    condindep_L_independent: float = defaults.CONDINDEP_L_INDEPENDENT
    level_rep_scale: float = defaults.LEVEL_REP_SCALE
    amp_reps: int = defaults.AMP_REPS
    compose_reps: int = defaults.COMPOSE_REPS
    seed: int | None = None
    oracle: CollectiveOracleParams = DEFAULT_ORACLE

    def __post_init__(self) -> None:
        for name in (
            "closeness_C",
            "collective_C",
            "swap_C",
            "collection_L",
            "condindep_L_collective",
            "condindep_L_independent",
            "level_rep_scale",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("amp_reps", "compose_reps"):
            reps = getattr(self, name)
            if reps < 1 or reps % 2 == 0:
                raise ValueError(f"{name} must be a positive odd integer, got {reps}")


DEFAULT_CONFIG = TesterConfig()


@dataclass(frozen=True)
class Verdict:
    """Outcome of one tester invocation.

    The answer is redundant with (statistic, threshold) by construction:
    "No" exactly when statistic > threshold.  ``copies_used`` equals the
    total drawn from every physical state source during the invocation.
    """

    answer: str
    statistic: float
    threshold: float
    copies_used: int
    setting: str
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.answer not in ("Yes", "No"):
            raise ValueError(f"answer must be Yes or No, got {self.answer!r}")
        expected = "No" if self.statistic > self.threshold else "Yes"
        if self.answer != expected:
            raise ValueError("verdict answer contradicts statistic/threshold")
        if self.copies_used < 0:
            raise ValueError("copies_used must be nonnegative")

    def accepted(self) -> bool:
        return self.answer == "Yes"

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _verdict(
    statistic: float, threshold: float, copies: int, setting: str, seed: int | None
) -> Verdict:
    answer = "No" if statistic > threshold else "Yes"
    return Verdict(answer, float(statistic), float(threshold), int(copies), setting, seed)


def _check_setting(setting: str) -> None:
    if setting not in SETTINGS:
        raise BadSetting(f"setting must be one of {SETTINGS}, got {setting!r}")


def _check_eps(eps: float, hi: float = 2.0) -> None:
    if not 0.0 < eps <= hi:
        raise BadEpsilon(f"distance parameter must be in (0, {hi}], got {eps}")


def _stream(cfg: TesterConfig, stream: RngStream | None) -> RngStream:
    if stream is not None:
        return stream
    seed = cfg.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy) % 2**63
    return RngStream(seed)


# ---------------------------------------------------------------------------
# State sources and copy accounting
# ---------------------------------------------------------------------------


@dataclass
class StateSource:
    """A stream of copies of one state, with draw accounting.

    Derived sources (marginals, products of marginals) carry a ``parent``
    and a ``cost_per_copy``: requesting one copy charges that many copies to
    the parent, which models preparing the derived state by consuming and
    partially discarding parent copies.  ``free`` sources (explicitly known
    states such as I/d) charge nothing.
    """

    state: DensityMatrix
    layout: SystemLayout
    name: str = "rho"
    parent: "StateSource | None" = None
    cost_per_copy: int = 1
    free: bool = False
    _drawn: int = field(default=0, init=False, repr=False)

    def __post_init__(self) -> None:
        self.layout.check(self.state)
        if self.cost_per_copy < 1:
            raise ValueError("cost_per_copy must be at least 1")

    def request(self, n: int) -> None:
        if n < 0:
            raise ValueError(f"cannot request {n} copies")
        if self.free:
            return
        if self.parent is not None:
            self.parent.request(n * self.cost_per_copy)
        else:
            self._drawn += n

    @property
    def drawn(self) -> int:
        """Copies drawn so far (meaningful on physical/root sources)."""
        return self._drawn

    def root(self) -> "StateSource":
        src = self
        while src.parent is not None:
            src = src.parent
        return src


def source(state: DensityMatrix, layout: SystemLayout | None = None, name: str = "rho") -> StateSource:
    if layout is None:
        layout = SystemLayout((state.dim,))
    return StateSource(state=state, layout=layout, name=name)


def uniform_source(layout: SystemLayout) -> StateSource:
    """The maximally mixed state as an explicitly known (free) source."""
    return StateSource(
        state=maximally_mixed(layout.total_dim), layout=layout, name="uniform", free=True
    )


def marginal_source(src: StateSource, keep: tuple[int, ...]) -> StateSource:
    """Reduced state on ``keep``; one copy costs one parent copy."""
    reduced = partial_trace(src.state, src.layout, keep)
    dims = tuple(src.layout.dims[i] for i in sorted(keep))
    return StateSource(
        state=reduced,
        layout=SystemLayout(dims),
        name=f"{src.name}[{','.join(map(str, sorted(keep)))}]",
        parent=src,
    )


def product_source(src: StateSource) -> StateSource:
    """Product of the marginals; one copy costs one parent copy per party."""
    prod = product_of_marginals(src.state, src.layout)
    return StateSource(
        state=prod,
        layout=src.layout,
        name=f"prod({src.name})",
        parent=src,
        cost_per_copy=src.layout.parties,
    )


def grouped_source(src: StateSource, cut: int) -> StateSource:
    """Same state, parties coarse-grained into (first ``cut``, rest)."""
    m = src.layout.parties
    if not 0 < cut < m:
        raise LayoutMismatch(f"cut {cut} must split {m} parties in two")
    d1 = math.prod(src.layout.dims[:cut])
    d2 = math.prod(src.layout.dims[cut:])
    return StateSource(
        state=src.state, layout=SystemLayout((d1, d2)), name=src.name, parent=src
    )


class _Meter:
    """Snapshot of the distinct physical roots behind a set of sources."""

    def __init__(self, *sources: StateSource) -> None:
        roots: list[StateSource] = []
        for s in sources:
            r = s.root()
            if all(r is not other for other in roots):
                roots.append(r)
        self._roots = roots
        self._base = [r.drawn for r in roots]

    def copies(self) -> int:
        return sum(r.drawn - b for r, b in zip(self._roots, self._base))


# ---------------------------------------------------------------------------
# Collections and classical-quantum-quantum states
# ---------------------------------------------------------------------------


@dataclass
class CollectionOracle:
    """Query access to indexed states; per-index draw counters."""

    sources: tuple[StateSource, ...]

    def __post_init__(self) -> None:
        if len(self.sources) < 1:
            raise StateError("a collection needs at least one state")
        layout = self.sources[0].layout
        for s in self.sources:
            if s.layout.dims != layout.dims:
                raise LayoutMismatch("all collection members must share a layout")

    @classmethod
    def from_states(
        cls, states: list[DensityMatrix], layout: SystemLayout | None = None
    ) -> "CollectionOracle":
        if layout is None:
            layout = SystemLayout((states[0].dim,))
        return cls(
            sources=tuple(
                StateSource(state=st, layout=layout, name=f"rho{i}")
                for i, st in enumerate(states)
            )
        )

    @property
    def n(self) -> int:
        return len(self.sources)

    @property
    def layout(self) -> SystemLayout:
        return self.sources[0].layout

    @property
    def counters(self) -> tuple[int, ...]:
        return tuple(s.drawn for s in self.sources)


@dataclass(frozen=True)
class WeightedCollection:
    """A collection with explicit positive weights.

    The weighted distance Sum_i c_i ||sigma - rho_i||_1 is only meaningful
    when the total weight stays in a fixed band [weight_lo, weight_hi]; a
    fresh uniform collection carries c_i = 1/n so the total is 1.
    """

    oracle: CollectionOracle
    weights: tuple[float, ...]
    weight_lo: float = 0.5
    weight_hi: float = 2.0

    def __post_init__(self) -> None:
        ws = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "weights", ws)
        if len(ws) != self.oracle.n:
            raise BadWeights(f"{len(ws)} weights for {self.oracle.n} states")
        if any(w <= 0 for w in ws):
            raise BadWeights("weights must be positive")
        total = sum(ws)
        if not self.weight_lo <= total <= self.weight_hi:
            raise BadWeights(
                f"total weight {total:.6g} outside [{self.weight_lo}, {self.weight_hi}]"
            )

    @classmethod
    def uniform(cls, oracle: CollectionOracle) -> "WeightedCollection":
        n = oracle.n
        return cls(oracle=oracle, weights=tuple(1.0 / n for _ in range(n)))


@dataclass(frozen=True)
class VirtualPlan:
    """Weighted collection rounded to a virtual uniform one.

    Each weight c_i is rounded down to the dyadic t_i = 2^floor(log2 c_i),
    then index i is replicated t_i / min(t) times.  A mean distance of eps
    under the weights implies mean distance >= eps * eps_scale over the
    virtual members, with eps_scale = min_i(t_i/c_i) / sum_i t_i.
    """

    eps_scale: float
    multiplicities: tuple[int, ...]

    @property
    def m_virt(self) -> int:
        return sum(self.multiplicities)

    def real_index(self, virt: int) -> int:
        """Map a virtual member index back to the real collection index."""
        acc = 0
        for i, n_i in enumerate(self.multiplicities):
            acc += n_i
            if virt < acc:
                return i
        raise IndexError(virt)


def virtual_plan(wc: WeightedCollection) -> VirtualPlan:
    exps = [math.frexp(c)[1] - 1 for c in wc.weights]  # floor(log2 c), exactly
    ts = [2.0**e for e in exps]
    eps_scale = min(t / c for t, c in zip(ts, wc.weights)) / sum(ts)
    e_min = min(exps)
    mult = tuple(2 ** (e - e_min) for e in exps)
    if sum(mult) > MAX_VIRTUAL:
        raise BadWeights(
            f"weights span too many octaves: virtual collection size {sum(mult)}"
        )
    return VirtualPlan(eps_scale=eps_scale, multiplicities=mult)


@dataclass(frozen=True)
class CqqState:
    """Classical-quantum-quantum state: label c with weight p_c tags a
    bipartite block rho^c on dims (d1, d2)."""

    dims: tuple[int, int]
    weights: np.ndarray
    blocks: tuple[DensityMatrix, ...]

    def __post_init__(self) -> None:
        ws = np.asarray(self.weights, dtype=float).ravel()
        ws.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        if ws.size != len(self.blocks) or ws.size == 0:
            raise StateError("need one weight per block")
        if np.any(ws < 0) or abs(ws.sum() - 1.0) > 1e-9:
            raise StateError("label weights must be a probability vector")
        layout = self.layout
        for b in self.blocks:
            layout.check(b)

    @property
    def layout(self) -> SystemLayout:
        return SystemLayout(self.dims)

    @property
    def n_labels(self) -> int:
        return len(self.blocks)


def cqq_surrogate_distance(cqq: CqqState) -> float:
    """Sum_c p_c ||rho^c - rho^c_1 x rho^c_2||_1.

    Zero exactly on conditionally independent states; a value v certifies a
    trace distance of at least v/4 to the set of conditionally independent
    states (mixing any block toward its own product can repair at most 4x
    the mixture budget).
    """
    layout = cqq.layout
    return float(
        sum(
            p * l1_distance(b, product_of_marginals(b, layout))
            for p, b in zip(cqq.weights, cqq.blocks)
        )
    )


# ---------------------------------------------------------------------------
# Budget closed forms (audited exactly by tests)
# ---------------------------------------------------------------------------


def identity_l2_independent_budget(d: int, eps2: float, C: float) -> int:
    """Per-side copies of the MUB l2 identity tester."""
    dp = pad_dim(d)
    return closeness_budget(eps2 / (dp + 1), math.sqrt(2.0) / (dp + 1), C)


def identity_l1_independent_budget(d: int, eps: float, C: float) -> int:
    dp = pad_dim(d)
    return identity_l2_independent_budget(d, eps / math.sqrt(dp), C)


def identity_l1_collective_budget(d: int, eps: float, C: float) -> int:
    # the collective estimator is undefined below 4 copies
    return max(4, math.ceil(C * pad_dim(d) / eps**2))


def swap_test_budget(eps2: float, C: float) -> int:
    """Number of swap batches; each batch burns two copies per side."""
    if eps2 <= 0:
        raise BadEpsilon(f"eps2 must be positive, got {eps2}")
    return math.ceil(C / eps2**4)


def local_identity_budget(dims: tuple[int, ...], eps: float, C: float) -> int:
    """Per-side copies of the local-measurement closeness tester."""
    dps = [pad_dim(d) for d in dims]
    prod_dp1 = math.prod(dp + 1 for dp in dps)
    eps_cl = eps / (math.sqrt(math.prod(dps)) * prod_dp1)
    b = 2 ** (len(dims) / 2) / prod_dp1
    return closeness_budget(eps_cl, b, C)


def identity_per_side_budget(
    layout: SystemLayout, eps: float, setting: str, cfg: TesterConfig = DEFAULT_CONFIG
) -> int:
    """Copies per side of one l1 identity test at radius ``eps``."""
    _check_setting(setting)
    d = layout.total_dim
    if setting == "independent":
        return identity_l1_independent_budget(d, eps, cfg.closeness_C)
    if setting == "collective":
        return identity_l1_collective_budget(d, eps, cfg.collective_C)
    if setting == "swap":
        return 2 * swap_test_budget(eps / math.sqrt(d), cfg.swap_C)
    return local_identity_budget(layout.dims, eps, cfg.closeness_C)


def bipartite_independence_budget(
    layout: SystemLayout, eps: float, setting: str, cfg: TesterConfig = DEFAULT_CONFIG
) -> int:
    """Total copies of the bipartite independence tester: the inner identity
    test runs at eps/3 and its product side costs two parent copies each."""
    return 3 * identity_per_side_budget(layout, eps / 3.0, setting, cfg)


@dataclass(frozen=True)
class LevelSpec:
    """One level of the collection schedule."""

    k: int
    radius: float
    draws: int
    reps: int


def collection_levels(
    m_virt: int,
    eps_v: float,
    L: float,
    rep_scale: float,
    pair_mode: bool,
) -> tuple[LevelSpec, ...]:
    """Doubling-radius schedule over a virtual uniform collection.

    Level k tests ceil(2^{3k/2} L) random members (pairs when ``pair_mode``)
    at radius 2^{k-1} eps_v, amplified by majority over enough repetitions
    that a single level-k test errs with probability ~ 6^{-k} L^{-2}.
    Levels whose radius exceeds 2 (the diameter of state space) are vacuous
    and skipped; this is what keeps the total budget independent of the
    collection size once the radius ladder saturates.
    """
    if m_virt < 2:
        return ()
    top = m_virt * (m_virt - 1) if pair_mode else m_virt
    k_max = math.ceil(math.log2(top))
    out = []
    for k in range(k_max + 1):
        radius = 2.0 ** (k - 1) * eps_v
        if radius > 2.0:
            continue
        draws = math.ceil(2.0 ** (1.5 * k) * L)
        reps = max(1, math.ceil(rep_scale * (k * math.log(6.0) + 2.0 * math.log(L))))
        if reps % 2 == 0:
            reps += 1
        out.append(LevelSpec(k=k, radius=radius, draws=draws, reps=reps))
    return tuple(out)


def collection_identity_copies(
    layout: SystemLayout,
    m_virt: int,
    eps_v: float,
    setting: str,
    cfg: TesterConfig = DEFAULT_CONFIG,
) -> int:
    """Exact total copies of collection_identity (deterministic schedule)."""
    total = 0
    for lv in collection_levels(
        m_virt, eps_v, cfg.collection_L, cfg.level_rep_scale, pair_mode=True
    ):
        total += lv.draws * lv.reps * 2 * identity_per_side_budget(layout, lv.radius, setting, cfg)
    return total


def _independence_test_copies(
    layout: SystemLayout, eps: float, setting: str, cfg: TesterConfig
) -> int:
    if layout.parties == 1:
        return 0
    if setting == "local":
        per_side = local_identity_budget(layout.dims, eps, cfg.closeness_C)
        return per_side * (1 + layout.parties)
    if layout.parties != 2:
        raise LayoutMismatch(
            "closed-form independence budgets cover bipartite layouts only"
        )
    return bipartite_independence_budget(layout, eps, setting, cfg)


def collection_independence_copies(
    layout: SystemLayout,
    m_virt: int,
    eps_v: float,
    setting: str,
    cfg: TesterConfig = DEFAULT_CONFIG,
) -> int:
    """Exact total copies of collection_independence (bipartite members)."""
    total = 0
    for lv in collection_levels(
        m_virt, eps_v, cfg.collection_L, cfg.level_rep_scale, pair_mode=False
    ):
        total += lv.draws * lv.reps * _independence_test_copies(layout, lv.radius, setting, cfg)
    return total


# ---------------------------------------------------------------------------
# Samplers that charge their source
# ---------------------------------------------------------------------------


def _mub_sampler(src: StateSource) -> Sampler:
    d = src.state.dim
    dp = pad_dim(d)
    st = src.state if dp == d else embed(src.state, SystemLayout((d,)), (dp,))
    p = channel_probabilities(st, mub_family(dp))

    def sample(m: float, rng: np.random.Generator) -> "Counts":
        src.request(int(round(m)))
        return poissonized_counts(p, m, rng)

    return sample


def _local_sampler(src: StateSource, povm: LocalMubPovm) -> Sampler:
    p = local_channel_probabilities(src.state, povm)

    def sample(m: float, rng: np.random.Generator) -> "Counts":
        src.request(int(round(m)))
        return poissonized_counts(p, m, rng)

    return sample


# ---------------------------------------------------------------------------
# Identity testers
# ---------------------------------------------------------------------------


def identity_l2_independent(
    src_rho: StateSource,
    src_sigma: StateSource,
    eps2: float,
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Distinguish rho = sigma from ||rho - sigma||_2 >= eps2 by measuring
    each copy with the MUB POVM and running the classical closeness test on
    the outcome images (the channel divides l2 distances by d'+1)."""
    if src_rho.state.dim != src_sigma.state.dim:
        raise DimMismatch(
            f"dimensions differ: {src_rho.state.dim} vs {src_sigma.state.dim}"
        )
    _check_eps(eps2)
    stream = _stream(cfg, stream)
    meter = _Meter(src_rho, src_sigma)
    dp = pad_dim(src_rho.state.dim)
    report = closeness_test(
        _mub_sampler(src_rho),
        _mub_sampler(src_sigma),
        eps2 / (dp + 1),
        math.sqrt(2.0) / (dp + 1),
        cfg.closeness_C,
        stream.generator(),
    )
    return _verdict(
        report.statistic, report.threshold, meter.copies(), "independent", stream.root_seed
    )


def identity_l1_independent(
    src_rho: StateSource,
    src_sigma: StateSource,
    eps: float,
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Trace-distance identity test; l1 >= eps forces l2 >= eps/sqrt(d')."""
    _check_eps(eps)
    dp = pad_dim(src_rho.state.dim)
    return identity_l2_independent(
        src_rho, src_sigma, eps / math.sqrt(dp), cfg, stream=stream
    )


def identity_l1_collective(
    src_rho: StateSource,
    src_sigma: StateSource,
    eps: float,
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """One collective estimate of ||rho - sigma||_2^2 from n = ceil(C d/eps^2)
    copies per side, thresholded at eps^2/(2d) (l1 > eps gives l2^2 > eps^2/d)."""
    if src_rho.state.dim != src_sigma.state.dim:
        raise DimMismatch(
            f"dimensions differ: {src_rho.state.dim} vs {src_sigma.state.dim}"
        )
    _check_eps(eps)
    stream = _stream(cfg, stream)
    meter = _Meter(src_rho, src_sigma)
    dp = pad_dim(src_rho.state.dim)
    n = identity_l1_collective_budget(src_rho.state.dim, eps, cfg.collective_C)
    src_rho.request(n)
    src_sigma.request(n)
    est = collective_l2_identity_oracle(
        src_rho.state, src_sigma.state, n, stream.generator(), cfg.oracle
    )
    return _verdict(
        est, eps**2 / (2.0 * dp), meter.copies(), "collective", stream.root_seed
    )


def swap_test_identity(
    src_rho: StateSource,
    src_sigma: StateSource,
    eps2: float,
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Swap-circuit baseline: Bernoulli outcomes at 1/2 + ||rho-sigma||_2^2/20,
    ceil(C/eps2^4) batches of two copies per side, mean thresholded at
    1/2 + eps2^2/40."""
    _check_eps(eps2)
    stream = _stream(cfg, stream)
    meter = _Meter(src_rho, src_sigma)
    batches = swap_test_budget(eps2, cfg.swap_C)
    src_rho.request(2 * batches)
    src_sigma.request(2 * batches)
    p_one = 0.5 + l2_distance(src_rho.state, src_sigma.state) ** 2 / 20.0
    ones = int(stream.generator().binomial(batches, p_one))
    return _verdict(
        ones / batches,
        0.5 + eps2**2 / 40.0,
        meter.copies(),
        "swap",
        stream.root_seed,
    )


def _identity_l1(
    setting: str,
    src_a: StateSource,
    src_b: StateSource,
    eps: float,
    cfg: TesterConfig,
    stream: RngStream,
) -> Verdict:
    _check_setting(setting)
    if setting == "independent":
        return identity_l1_independent(src_a, src_b, eps, cfg, stream=stream)
    if setting == "collective":
        return identity_l1_collective(src_a, src_b, eps, cfg, stream=stream)
    if setting == "swap":
        eps2 = eps / math.sqrt(src_a.state.dim)
        return swap_test_identity(src_a, src_b, eps2, cfg, stream=stream)
    return local_identity(src_a, src_b, eps, cfg, stream=stream)


def identity_test(
    src_rho: StateSource,
    src_sigma: StateSource,
    eps: float,
    setting: str = "independent",
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Trace-distance identity test in the chosen measurement setting."""
    _check_setting(setting)
    _check_eps(eps)
    stream = _stream(cfg, stream)
    return _identity_l1(setting, src_rho, src_sigma, eps, cfg, stream)


def mixedness(
    src_rho: StateSource,
    eps: float,
    setting: str = "independent",
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Is rho the maximally mixed state, or eps-far from it in trace distance?

    Reduces to an identity test against an explicitly known I/d side, which
    consumes no quantum copies (its outcome distribution is written down, not
    sampled from a physical source)."""
    _check_eps(eps)
    stream = _stream(cfg, stream)
    return _identity_l1(
        setting, src_rho, uniform_source(src_rho.layout), eps, cfg, stream
    )


def mixedness_independent(
    src_rho: StateSource,
    eps: float,
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """MUB-measurement mixedness test; closeness against the exact image of
    I/d (uniform over outcomes when d is a power of two)."""
    return mixedness(src_rho, eps, "independent", cfg, stream=stream)


# ---------------------------------------------------------------------------
# Local-measurement testers
# ---------------------------------------------------------------------------


def local_identity(
    src_rho: StateSource,
    src_sigma: StateSource,
    eps: float,
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Identity test from per-party MUB measurements only.

    The joint outcome image contracts l2 distances by prod(d_i'+1) at worst
    (the full-subset term alone), so closeness at radius
    eps / (sqrt(prod d_i') prod(d_i'+1)) with norm bound 2^{m/2}/prod(d_i'+1)
    decides l1 identity at radius eps.
    """
    if src_rho.layout.dims != src_sigma.layout.dims:
        raise LayoutMismatch(
            f"layouts differ: {src_rho.layout.dims} vs {src_sigma.layout.dims}"
        )
    _check_eps(eps)
    stream = _stream(cfg, stream)
    meter = _Meter(src_rho, src_sigma)
    povm = local_mub_povm(src_rho.layout)
    dps = povm.padded_dims
    prod_dp1 = math.prod(dp + 1 for dp in dps)
    eps_cl = eps / (math.sqrt(math.prod(dps)) * prod_dp1)
    b = 2 ** (len(dps) / 2) / prod_dp1
    report = closeness_test(
        _local_sampler(src_rho, povm),
        _local_sampler(src_sigma, povm),
        eps_cl,
        b,
        cfg.closeness_C,
        stream.generator(),
    )
    return _verdict(
        report.statistic, report.threshold, meter.copies(), "local", stream.root_seed
    )


def local_independence(
    src_rho: StateSource,
    eps: float,
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Independence test from per-party MUB measurements only.

    Compares the image of rho against the image of the product of its own
    marginals directly (no composition slack needed: an eps-far state is in
    particular eps-far from that one product state).  Product-side samples
    cost one parent copy per party.
    """
    _check_eps(eps)
    if src_rho.layout.parties == 1:
        stream = _stream(cfg, stream)
        return _verdict(0.0, 0.0, 0, "local", stream.root_seed)
    stream = _stream(cfg, stream)
    meter = _Meter(src_rho)
    povm = local_mub_povm(src_rho.layout)
    dps = povm.padded_dims
    prod_dp1 = math.prod(dp + 1 for dp in dps)
    eps_cl = eps / (math.sqrt(math.prod(dps)) * prod_dp1)
    b = 2 ** (len(dps) / 2) / prod_dp1
    report = closeness_test(
        _local_sampler(src_rho, povm),
        _local_sampler(product_source(src_rho), povm),
        eps_cl,
        b,
        cfg.closeness_C,
        stream.generator(),
    )
    return _verdict(
        report.statistic, report.threshold, meter.copies(), "local", stream.root_seed
    )


# ---------------------------------------------------------------------------
# Independence testers (single state)
# ---------------------------------------------------------------------------


def bipartite_independence(
    src_rho: StateSource,
    eps: float,
    setting: str = "collective",
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Is the bipartite state a product, or eps-far from every product?

    Builds the product of the exact marginals as a derived source (each copy
    charged as one parent copy per party, the simulation twin of preparing
    marginals by discarding subsystems) and runs the selected-setting
    identity tester against it at eps/3; an eps-far state is more than
    eps-far from the product of its own marginals, so the margin is ample.
    """
    _check_setting(setting)
    _check_eps(eps)
    if src_rho.layout.parties != 2:
        raise LayoutMismatch(f"expected 2 parties, got {src_rho.layout.dims}")
    stream = _stream(cfg, stream)
    meter = _Meter(src_rho)
    inner = _identity_l1(
        setting, src_rho, product_source(src_rho), eps / 3.0, cfg, stream
    )
    return _verdict(
        inner.statistic, inner.threshold, meter.copies(), setting, stream.root_seed
    )


def _no_share(run, reps: int, stream: RngStream) -> float:
    """Fraction of No votes over ``reps`` independently seeded runs."""
    votes = sum(1 for r in range(reps) if run(stream.child(f"rep{r}")).answer == "No")
    return votes / reps


def mpartite_independence(
    src_rho: StateSource,
    eps: float,
    setting: str = "collective",
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Recursive halving independence test for m parties.

    One party is trivially independent; two parties run the bipartite tester
    verbatim.  Otherwise the parties split in half and three majority-
    amplified stages run at radius eps/5: independence across the cut, then
    recursion on each half's marginal.  If none of the three flags, the
    state is independent up to eps (each stage is amplified so the three-way
    conjunction keeps 2/3 confidence).
    """
    _check_setting(setting)
    _check_eps(eps)
    stream = _stream(cfg, stream)
    m = src_rho.layout.parties
    if m == 1:
        return _verdict(0.0, 0.0, 0, setting, stream.root_seed)
    if m == 2:
        return bipartite_independence(src_rho, eps, setting, cfg, stream=stream)
    meter = _Meter(src_rho)
    cut = m // 2
    stages = [
        (
            "cut",
            grouped_source(src_rho, cut),
            lambda s, st: bipartite_independence(s, eps / 5.0, setting, cfg, stream=st),
        ),
        (
            "left",
            marginal_source(src_rho, tuple(range(cut))),
            lambda s, st: mpartite_independence(s, eps / 5.0, setting, cfg, stream=st),
        ),
        (
            "right",
            marginal_source(src_rho, tuple(range(cut, m))),
            lambda s, st: mpartite_independence(s, eps / 5.0, setting, cfg, stream=st),
        ),
    ]
    worst = 0.0
    for role, src, run in stages:
        share = _no_share(lambda st: run(src, st), cfg.amp_reps, stream.child(role))
        worst = max(worst, share)
        if share > 0.5:  # the algorithm stops at the first failing stage
            break
    return _verdict(worst, 0.5, meter.copies(), setting, stream.root_seed)


# ---------------------------------------------------------------------------
# Collection testers (query model)
# ---------------------------------------------------------------------------


def _draw_virtual_pair(
    plan: VirtualPlan, rng: np.random.Generator
) -> tuple[int, int]:
    m = plan.m_virt
    a = int(rng.integers(m))
    b = int(rng.integers(m - 1))
    if b >= a:
        b += 1
    return plan.real_index(a), plan.real_index(b)


def collection_identity(
    wc: WeightedCollection,
    eps: float,
    setting: str = "collective",
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Are all collection members identical, or is every candidate state at
    weighted distance > eps from the collection?

    The weighted problem reduces to a virtual uniform collection (see
    VirtualPlan); on it, each schedule level draws random pairs and identity-
    tests them at a doubled radius with majority amplification.  The full
    schedule always runs (no early exit) so the copy budget is a deterministic
    closed form; the verdict counts flagged pairs.
    """
    _check_setting(setting)
    _check_eps(eps)
    stream = _stream(cfg, stream)
    plan = virtual_plan(wc)
    meter = _Meter(*wc.oracle.sources)
    eps_v = eps * plan.eps_scale
    flagged = 0
    for lv in collection_levels(
        plan.m_virt, eps_v, cfg.collection_L, cfg.level_rep_scale, pair_mode=True
    ):
        lstream = stream.child(f"lvl{lv.k}")
        rng = lstream.generator()
        for t in range(lv.draws):
            i, j = _draw_virtual_pair(plan, rng)
            share = _no_share(
                lambda st: _identity_l1(
                    setting, wc.oracle.sources[i], wc.oracle.sources[j], lv.radius, cfg, st
                ),
                lv.reps,
                lstream.child(f"pair{t}"),
            )
            if share > 0.5:
                flagged += 1
    return _verdict(float(flagged), 0.0, meter.copies(), setting, stream.root_seed)


def _independence_test(
    setting: str, src: StateSource, eps: float, cfg: TesterConfig, stream: RngStream
) -> Verdict:
    if setting == "local":
        return local_independence(src, eps, cfg, stream=stream)
    return mpartite_independence(src, eps, setting, cfg, stream=stream)


def collection_independence(
    wc: WeightedCollection,
    eps: float,
    setting: str = "collective",
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Is every collection member a product state, or is the weighted
    distance to any choice of per-member products > eps?

    Same schedule as collection_identity, but each draw picks a single
    member and independence-tests it at the level radius.
    """
    _check_setting(setting)
    _check_eps(eps)
    stream = _stream(cfg, stream)
    plan = virtual_plan(wc)
    meter = _Meter(*wc.oracle.sources)
    eps_v = eps * plan.eps_scale
    flagged = 0
    for lv in collection_levels(
        plan.m_virt, eps_v, cfg.collection_L, cfg.level_rep_scale, pair_mode=False
    ):
        lstream = stream.child(f"lvl{lv.k}")
        rng = lstream.generator()
        for t in range(lv.draws):
            i = plan.real_index(int(rng.integers(plan.m_virt)))
            share = _no_share(
                lambda st: _independence_test(
                    setting, wc.oracle.sources[i], lv.radius, cfg, st
                ),
                lv.reps,
                lstream.child(f"idx{t}"),
            )
            if share > 0.5:
                flagged += 1
    return _verdict(float(flagged), 0.0, meter.copies(), setting, stream.root_seed)


def collection_identity_independence(
    wc: WeightedCollection,
    eps: float,
    setting: str = "collective",
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Are all members equal to one common product state?

    Runs the identity and independence collection testers at eps/3, each
    amplified by majority over compose_reps so that both succeed together
    with comfortable margin; No if either flags.  (If the members are within
    eps/3 of identical and within eps/3 of independent, a single product
    state is within eps of all of them.)
    """
    _check_setting(setting)
    _check_eps(eps)
    stream = _stream(cfg, stream)
    meter = _Meter(*wc.oracle.sources)
    share_id = _no_share(
        lambda st: collection_identity(wc, eps / 3.0, setting, cfg, stream=st),
        cfg.compose_reps,
        stream.child("identical"),
    )
    share_ind = _no_share(
        lambda st: collection_independence(wc, eps / 3.0, setting, cfg, stream=st),
        cfg.compose_reps,
        stream.child("independent"),
    )
    return _verdict(
        max(share_id, share_ind), 0.5, meter.copies(), setting, stream.root_seed
    )


# ---------------------------------------------------------------------------
# Conditional independence of classical-quantum-quantum states
# ---------------------------------------------------------------------------


def truncated_poisson_mean(x: float) -> float:
    """E[N 1_{N>=4}] for N ~ Poisson(x): x - e^{-x}(x + x^2 + x^3/2).

    Satisfies f(x) >= gamma min(x, x^4) with gamma = f(1) = 1 - 5/(2e); this
    is the payoff curve of the bucket truncation below (buckets with fewer
    than 4 samples contribute nothing).
    """
    if x < 0:
        raise NegativeInput(f"Poisson mean must be nonnegative, got {x}")
    return x - math.exp(-x) * (x + x**2 + x**3 / 2.0)


def xi_threshold(m: float, eps: float, d1: int, d2: int, n: int) -> float:
    """Acceptance threshold of the conditional-independence testers."""
    gamma = 1.0 - 5.0 / (2.0 * math.e)
    return (gamma / 2.0) * min(
        m * eps**2 / (4.0 * d1 * d2),
        m**4 * eps**4 / (32.0 * d1**2 * d2**2 * n**3),
    )


def condindep_budget(
    n: int,
    d1: int,
    d2: int,
    eps: float,
    setting: str = "collective",
    L: float | None = None,
) -> tuple[float, float]:
    """(m, xi) for the conditional-independence tester.

    m follows the three-regime closed form (the max/min expression covers
    all regimes); collective measurements get the d1 d2 scaling, independent
    measurements the d1^2 d2^2 scaling.
    """
    if min(n, d1, d2) < 1 or eps <= 0:
        raise NegativeInput("n, d1, d2 must be positive and eps > 0")
    if setting == "collective":
        if L is None:
            L = defaults.CONDINDEP_L_COLLECTIVE
        m0 = max(
            math.sqrt(n) * d1 * d2 / eps**2,
            min(
                d1 ** (4 / 7) * d2 ** (4 / 7) * n ** (6 / 7) / eps ** (8 / 7),
                math.sqrt(d1 * d2) * n ** (7 / 8) / eps,
            ),
        )
    elif setting == "independent":
        if L is None:
            L = defaults.CONDINDEP_L_INDEPENDENT
        m0 = max(
            math.sqrt(n) * d1**2 * d2**2 / eps**2,
            min(
                d1 ** (3 / 4) * d2 ** (3 / 4) * n ** (7 / 8) / eps,
                d1 ** (6 / 7) * d2 ** (6 / 7) * n ** (6 / 7) / eps ** (8 / 7),
            ),
        )
    else:
        raise BadSetting(
            f"conditional independence runs collective or independent, got {setting!r}"
        )
    m = L * m0
    return m, xi_threshold(m, eps, d1, d2, n)


def _bucket_sizes(cqq: CqqState, m: float, rng: np.random.Generator) -> np.ndarray:
    total = poissonize(m, rng)
    return rng.multinomial(total, cqq.weights)


def cond_indep_collective(
    cqq: CqqState,
    eps: float,
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Test whether every classical-label block is a product state.

    Poisson(m) copies are measured on the label register; each label bucket
    with at least 4 copies feeds a collective estimate of its block's squared
    l2 distance to the product of its marginals, weighted by the bucket size.
    The accumulated statistic A is compared against the xi threshold.
    copies_used reports the declared Poisson budget ceil(m).
    """
    _check_eps(eps)
    stream = _stream(cfg, stream)
    rng = stream.generator()
    m, xi = condindep_budget(
        cqq.n_labels, *cqq.dims, eps, "collective", cfg.condindep_L_collective
    )
    layout = cqq.layout
    a = _bucket_sizes(cqq, m, rng)
    total = 0.0
    for a_c, block in zip(a, cqq.blocks):
        if a_c >= 4:
            est = collective_independence_oracle(
                block, layout, int(a_c), rng, cfg.oracle
            )
            total += a_c * est
    return _verdict(total, xi, math.ceil(m), "collective", stream.root_seed)


def cond_indep_independent(
    cqq: CqqState,
    eps: float,
    cfg: TesterConfig = DEFAULT_CONFIG,
    *,
    stream: RngStream | None = None,
) -> Verdict:
    """Conditional independence with per-copy local MUB measurements.

    Each bucket's samples land in the joint local-outcome alphabet; the
    collision U-statistic of that contingency table estimates the image
    distance, and multiplying by ((d1'+1)(d2'+1))^2 undoes the channel
    contraction so the same xi threshold applies.
    """
    _check_eps(eps)
    stream = _stream(cfg, stream)
    rng = stream.generator()
    m, xi = condindep_budget(
        cqq.n_labels, *cqq.dims, eps, "independent", cfg.condindep_L_independent
    )
    povm = local_mub_povm(cqq.layout)
    scale = float(math.prod(dp + 1 for dp in povm.padded_dims)) ** 2
    a = _bucket_sizes(cqq, m, rng)
    total = 0.0
    for a_c, block in zip(a, cqq.blocks):
        if a_c >= 4:
            p = local_channel_probabilities(block, povm)
            counts = sample_counts(p, int(a_c), rng)
            table = counts.tallies.reshape(povm.outcome_dims)
            total += a_c * scale * independence_l2_ustat_from_table(table)
    return _verdict(total, xi, math.ceil(m), "independent", stream.root_seed)
