"""Experiment harness: planted fixtures, sweeps, calibration, self-checks.

An experiment runs one tester over a grid of distance parameters.  At every
grid point a planted fixture provides a yes-instance (satisfies the property
exactly) and a no-instance (exact, oracle-verified planted distance); the
tester runs ``trials`` times on each with per-trial random streams derived
from ``(root seed, trial index)``, so results are reproducible and
independent of execution order, including under the thread pool.

Output is CSV (one row per grid point, stable column order) or JSON.  Two
runs with the same spec and seed produce byte-identical files: wall times
are recorded per trial but never serialized into the sweep output.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mubtest import defaults, mub, testers
from mubtest.classical import cdvv_statistic
from mubtest.sampling import RngStream, poissonized_counts
from mubtest.states import (
    DensityMatrix,
    StateError,
    StatePair,
    SystemLayout,
    basis_state,
    distance_to_product,
    interpolate_toward,
    l1_distance,
    l2_distance,
    maximally_mixed,
    pure_from_vector,
    random_mixed,
    tensor_all,
)
from mubtest.testers import (
    CollectionOracle,
    CqqState,
    TesterConfig,
    Verdict,
    WeightedCollection,
    cqq_surrogate_distance,
)

WILSON_Z = 1.959963984540054  # two-sided 95%

TESTER_IDS = (
    "identity",
    "mixedness",
    "independence",
    "collection-identity",
    "collection-independence",
    "collection-both",
    "condindep",
)

CSV_COLUMNS = (
    "tester",
    "setting",
    "dims",
    "epsilon",
    "trials",
    "yes_rate",
    "no_rate",
    "wilson_lo",
    "mean_copies",
    "seed",
)


class BadSpec(ValueError):
    """Experiment spec fails validation."""


class IoError(OSError):
    """Could not write experiment output."""


class CalibrationFailed(RuntimeError):
    """No constant in the search ladder met the error target."""


class UnreachableDistance(StateError):
    """The requested planted distance exceeds what the layout allows."""


def wilson_lower(successes: int, n: int, z: float = WILSON_Z) -> float:
    """Lower end of the Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = successes / n
    denom = 1.0 + z**2 / n
    center = phat + z**2 / (2 * n)
    half = z * math.sqrt(phat * (1 - phat) / n + z**2 / (4 * n**2))
    return (center - half) / denom


# ---------------------------------------------------------------------------
# Planted fixtures
# ---------------------------------------------------------------------------


def _haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _rotated_entangled(layout: SystemLayout, rng: np.random.Generator) -> DensityMatrix:
    """A GHZ-like pure state |sum_i i...i> / sqrt(dmin), scrambled by
    independent local Haar unitaries so it is not aligned with any MUB."""
    dmin = min(layout.dims)
    vec = np.zeros(layout.total_dim, dtype=np.complex128)
    vec_nd = vec.reshape(layout.dims)
    for i in range(dmin):
        vec_nd[(i,) * layout.parties] = 1.0 / math.sqrt(dmin)
    rot = _haar_unitary(layout.dims[0], rng)
    for d in layout.dims[1:]:
        rot = np.kron(rot, _haar_unitary(d, rng))
    return pure_from_vector(rot @ vec)


def _plant_from(
    base: DensityMatrix, endpoint: DensityMatrix, eps: float
) -> tuple[DensityMatrix, float]:
    """Mix base toward endpoint so the trace distance is exactly 2 eps."""
    span = l1_distance(base, endpoint)
    if 2.0 * eps > span + 1e-12:
        raise UnreachableDistance(
            f"cannot plant trace distance {2 * eps:.4g}: endpoints are {span:.4g} apart"
        )
    lam = min(1.0, 2.0 * eps / span)
    planted = interpolate_toward(base, endpoint, lam)
    got = l1_distance(base, planted)
    assert abs(got - 2.0 * eps) <= 1e-9, got
    return planted, got


def _plant_far_from_product(
    layout: SystemLayout, eps: float, rng: np.random.Generator
) -> tuple[DensityMatrix, float]:
    """A state whose distance to the product of its own marginals is exactly
    2 eps, found by bisecting the mixing parameter toward an entangled
    endpoint; if even the endpoint cannot reach 2 eps, the endpoint itself is
    used (its exact distance must still clear eps)."""
    base = maximally_mixed(layout.total_dim)
    endpoint = _rotated_entangled(layout, rng)

    def dist(lam: float) -> float:
        return distance_to_product(interpolate_toward(base, endpoint, lam), layout)

    top = dist(1.0)
    if top <= eps:
        raise UnreachableDistance(
            f"entangled endpoint is only {top:.4g} from product on {layout.dims}, "
            f"below the requested eps {eps:.4g}"
        )
    if top < 2.0 * eps:
        return endpoint, top
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if dist(mid) < 2.0 * eps:
            lo = mid
        else:
            hi = mid
    planted = interpolate_toward(base, endpoint, hi)
    got = distance_to_product(planted, layout)
    assert got >= 2.0 * eps - 1e-9, got
    return planted, got


def _random_product(layout: SystemLayout, rng: np.random.Generator) -> DensityMatrix:
    return tensor_all([random_mixed(d, d, rng) for d in layout.dims])


def make_fixture(
    kind: str,
    layout: SystemLayout,
    eps: float,
    rng: np.random.Generator,
    *,
    n_states: int = 8,
    n_labels: int = 4,
) -> StatePair:
    """A planted yes/no instance pair for one tester family.

    The yes-instance satisfies the property exactly; the no-instance carries
    an exact planted distance, checked against the state-space oracles before
    it is returned.  What the instances are depends on ``kind``:

    - ``identity``: pairs of states ``(a, b)``; planted ``l1(a, b) = 2 eps``.
    - ``independence``: a single multipartite state; planted distance to the
      product of its own marginals (``2 eps`` when reachable, otherwise the
      exact distance of the pure entangled endpoint, which must exceed eps).
    - ``collection-identity`` / ``collection-independence`` /
      ``collection-both``: lists of member states; the no-list has half its
      members replaced by a planted-far one.
    - ``condindep``: CqqState; planted distance is the exact label-weighted
      trace distance of the blocks to their per-block marginal products.

    Raises UnreachableDistance when the layout cannot support the request.
    """
    if eps <= 0:
        raise BadSpec(f"eps must be positive, got {eps}")
    if kind == "identity":
        u = _haar_unitary(layout.total_dim, rng)
        a = pure_from_vector(u[:, 0])
        b = pure_from_vector(u[:, 1])  # orthogonal to a, so l1(a, b) = 2
        far, got = _plant_from(a, b, eps)
        return StatePair((a, a), (far, a), got, metric="l1")
    if kind == "independence":
        yes = _random_product(layout, rng)
        far, got = _plant_far_from_product(layout, eps, rng)
        return StatePair(yes, far, got, metric="l1-to-own-product")
    if kind == "collection-identity":
        u = _haar_unitary(layout.total_dim, rng)
        sigma = pure_from_vector(u[:, 0])
        far, got = _plant_from(sigma, pure_from_vector(u[:, 1]), eps)
        k = n_states // 2
        return StatePair(
            [sigma] * n_states, [sigma] * (n_states - k) + [far] * k, got, metric="l1"
        )
    if kind == "collection-independence":
        yes = [_random_product(layout, rng) for _ in range(n_states)]
        far, got = _plant_far_from_product(layout, eps, rng)
        k = n_states // 2
        no = [_random_product(layout, rng) for _ in range(n_states - k)] + [far] * k
        return StatePair(yes, no, got, metric="l1-to-own-product")
    if kind == "collection-both":
        # the composed property (all members equal AND product) needs one
        # common product state on the yes side; the planted member breaks
        # independence, and thereby also identity with the rest
        sigma = _random_product(layout, rng)
        far, got = _plant_far_from_product(layout, eps, rng)
        k = n_states // 2
        return StatePair(
            [sigma] * n_states, [sigma] * (n_states - k) + [far] * k, got,
            metric="l1-to-own-product",
        )
    if kind == "condindep":
        weights = rng.dirichlet(np.ones(n_labels))
        yes = CqqState(
            tuple(layout.dims), weights, tuple(_random_product(layout, rng) for _ in range(n_labels))
        )
        # aim each block at distance 4 eps from its marginal product: a state
        # whose label-weighted block distance exceeds 4 eps cannot be patched
        # into a conditionally independent one within trace distance eps, so
        # the planted instance is far in the property metric, not only in the
        # surrogate.  (Falls back to the entangled endpoint, still > 2 eps.)
        blocks = []
        for _ in range(n_labels):
            block, block_dist = _plant_far_from_product(layout, 2.0 * eps, rng)
            blocks.append((block, block_dist))
        no = CqqState(tuple(layout.dims), weights, tuple(b for b, _ in blocks))
        got = cqq_surrogate_distance(no)
        expected = float(np.dot(weights, [d for _, d in blocks]))
        assert abs(got - expected) <= 1e-9
        return StatePair(yes, no, got, metric="cqq-surrogate-l1")
    raise BadSpec(f"unknown fixture kind {kind!r}")


def _mixedness_pair(layout: SystemLayout, eps: float, rng: np.random.Generator) -> StatePair:
    """Yes: I/d exactly.  No: mixed away toward a random pure state, planted
    at trace distance exactly 2 eps (reachable while eps <= 1 - 1/d)."""
    d = layout.total_dim
    base = maximally_mixed(d)
    endpoint = pure_from_vector(_haar_unitary(d, rng)[:, 0])
    far, got = _plant_from(base, endpoint, eps)
    return StatePair(base, far, got, metric="l1")


# ---------------------------------------------------------------------------
# Experiment specs and reports
# ---------------------------------------------------------------------------


_CONDINDEP_SETTINGS = ("collective", "independent")


@dataclass(frozen=True)
class ExperimentSpec:
    """One tester, one layout, a grid of distance parameters."""

    tester: str
    layout: tuple[int, ...]
    epsilons: tuple[float, ...]
    trials: int = 100
    setting: str = "collective"
    seed: int = 2026
    config: TesterConfig = testers.DEFAULT_CONFIG
    n_states: int = 8
    n_labels: int = 4
    out: str | None = None
    fmt: str = "csv"
    workers: int = 1
    acceptance: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "layout", tuple(int(d) for d in self.layout))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        if self.tester not in TESTER_IDS:
            raise BadSpec(f"tester must be one of {TESTER_IDS}, got {self.tester!r}")
        allowed = _CONDINDEP_SETTINGS if self.tester == "condindep" else testers.SETTINGS
        if self.setting not in allowed:
            raise BadSpec(f"{self.tester} runs in settings {allowed}, got {self.setting!r}")
        if not self.epsilons:
            raise BadSpec("epsilon grid must be nonempty")
        if any(not 0.0 < e <= 1.0 for e in self.epsilons):
            raise BadSpec(f"epsilons must lie in (0, 1], got {self.epsilons}")
        if any(d < 2 for d in self.layout) or not self.layout:
            raise BadSpec(f"layout dims must all be >= 2, got {self.layout}")
        if self.trials < 1:
            raise BadSpec("trials must be >= 1")
        if self.acceptance and self.trials < 100:
            raise BadSpec("acceptance runs need at least 100 trials per point")
        if self.n_states < 2 or self.n_labels < 1:
            raise BadSpec("need n_states >= 2 and n_labels >= 1")
        if self.workers < 1:
            raise BadSpec("workers must be >= 1")
        if self.fmt not in ("csv", "json"):
            raise BadSpec(f"format must be csv or json, got {self.fmt!r}")


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    kind: str  # "yes" or "no"
    answer: str
    statistic: float
    threshold: float
    copies_used: int
    wall_time: float

    @property
    def correct(self) -> bool:
        return self.answer == ("Yes" if self.kind == "yes" else "No")


@dataclass(frozen=True)
class PointSummary:
    epsilon: float
    planted_distance: float
    trials: int
    yes_rate: float
    no_rate: float
    wilson_lo: float
    mean_copies: float
    records: tuple[TrialRecord, ...]


@dataclass(frozen=True)
class ExperimentReport:
    spec: ExperimentSpec
    points: tuple[PointSummary, ...]

    def rows(self) -> list[dict]:
        dims = "x".join(str(d) for d in self.spec.layout)
        out = []
        for pt in self.points:
            out.append(
                {
                    "tester": self.spec.tester,
                    "setting": self.spec.setting,
                    "dims": dims,
                    "epsilon": pt.epsilon,
                    "trials": pt.trials,
                    "yes_rate": pt.yes_rate,
                    "no_rate": pt.no_rate,
                    "wilson_lo": pt.wilson_lo,
                    "mean_copies": pt.mean_copies,
                    "seed": self.spec.seed,
                }
            )
        return out

    def to_csv(self) -> str:
        fmt = {
            "epsilon": "%g",
            "yes_rate": "%.6f",
            "no_rate": "%.6f",
            "wilson_lo": "%.6f",
            "mean_copies": "%.1f",
        }
        lines = [",".join(CSV_COLUMNS)]
        for row in self.rows():
            lines.append(
                ",".join(fmt.get(c, "%s") % row[c] for c in CSV_COLUMNS)
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.rows(), indent=2) + "\n"

    def write(self, path: str) -> None:
        text = self.to_csv() if self.spec.fmt == "csv" else self.to_json()
        try:
            with open(path, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Running experiments
# ---------------------------------------------------------------------------


def _run_tester(
    spec: ExperimentSpec, instance, eps: float, stream: RngStream
) -> Verdict:
    """One tester invocation on one fixture instance, fresh sources each time."""
    cfg = spec.config
    lay = SystemLayout(spec.layout)
    tid = spec.tester
    if tid == "identity":
        a, b = instance
        return testers.identity_test(
            testers.source(a, lay), testers.source(b, lay), eps, spec.setting, cfg, stream=stream
        )
    if tid == "mixedness":
        return testers.mixedness(
            testers.source(instance, lay), eps, spec.setting, cfg, stream=stream
        )
    if tid == "independence":
        src = testers.source(instance, lay)
        if spec.setting == "local":
            return testers.local_independence(src, eps, cfg, stream=stream)
        return testers.mpartite_independence(src, eps, spec.setting, cfg, stream=stream)
    if tid.startswith("collection"):
        oracle = CollectionOracle.from_states(list(instance), lay)
        wc = WeightedCollection.uniform(oracle)
        fn = {
            "collection-identity": testers.collection_identity,
            "collection-independence": testers.collection_independence,
            "collection-both": testers.collection_identity_independence,
        }[tid]
        return fn(wc, eps, spec.setting, cfg, stream=stream)
    if tid == "condindep":
        fn = (
            testers.cond_indep_collective
            if spec.setting == "collective"
            else testers.cond_indep_independent
        )
        return fn(instance, eps, cfg, stream=stream)
    raise BadSpec(f"unknown tester {tid!r}")


def _point_fixture(spec: ExperimentSpec, eps: float, point: int) -> StatePair:
    rng = RngStream(spec.seed, trial=point, role="fixture").generator()
    lay = SystemLayout(spec.layout)
    if spec.tester == "mixedness":
        return _mixedness_pair(lay, eps, rng)
    kind = {
        "identity": "identity",
        "independence": "independence",
        "collection-identity": "collection-identity",
        "collection-independence": "collection-independence",
        "collection-both": "collection-both",
        "condindep": "condindep",
    }[spec.tester]
    return make_fixture(
        kind, lay, eps, rng, n_states=spec.n_states, n_labels=spec.n_labels
    )


def run_experiment(spec: ExperimentSpec) -> ExperimentReport:
    """Run the grid, aggregate rates and budgets, optionally write the file.

    Trial t of point p uses the stream (seed, 2*trials*p + t); yes-instances
    occupy the first ``trials`` indices of each point, no-instances the rest.
    Records come back in index order whatever the executor did.
    """
    points = []
    for p_idx, eps in enumerate(spec.epsilons):
        fixture = _point_fixture(spec, eps, p_idx)
        base = 2 * spec.trials * p_idx
        jobs = [
            (base + t, "yes", fixture.yes_instance) for t in range(spec.trials)
        ] + [
            (base + spec.trials + t, "no", fixture.no_instance) for t in range(spec.trials)
        ]

        def one(job) -> TrialRecord:
            idx, kind, instance = job
            t0 = time.perf_counter()
            v = _run_tester(spec, instance, eps, RngStream(spec.seed, trial=idx))
            return TrialRecord(
                idx, kind, v.answer, v.statistic, v.threshold, v.copies_used,
                time.perf_counter() - t0,
            )

        if spec.workers > 1:
            with ThreadPoolExecutor(max_workers=spec.workers) as pool:
                records = sorted(pool.map(one, jobs), key=lambda r: r.trial)
        else:
            records = [one(j) for j in jobs]
        yes_recs = records[: spec.trials]
        no_recs = records[spec.trials :]
        yes_ok = sum(r.correct for r in yes_recs)
        no_ok = sum(r.correct for r in no_recs)
        points.append(
            PointSummary(
                epsilon=eps,
                planted_distance=fixture.planted_distance,
                trials=spec.trials,
                yes_rate=yes_ok / spec.trials,
                no_rate=no_ok / spec.trials,
                wilson_lo=min(
                    wilson_lower(yes_ok, spec.trials), wilson_lower(no_ok, spec.trials)
                ),
                mean_copies=float(np.mean([r.copies_used for r in records])),
                records=tuple(records),
            )
        )
    report = ExperimentReport(spec=spec, points=tuple(points))
    if spec.out is not None:
        report.write(spec.out)
    return report


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

#: Which TesterConfig field each (tester, setting) pair is calibrated on.
def _constant_field(tester: str, setting: str) -> str:
    if tester == "condindep":
        return (
            "condindep_L_collective" if setting == "collective" else "condindep_L_independent"
        )
    if tester.startswith("collection"):
        return "collection_L"
    if setting == "collective":
        return "collective_C"
    if setting == "swap":
        return "swap_C"
    return "closeness_C"


#: Default worst-case grids: (layout, eps) points per tester id.
CALIBRATION_GRIDS: dict[str, tuple[tuple[tuple[int, ...], float], ...]] = {
    "identity": (((2,), 0.5), ((2,), 1.0), ((4,), 0.5)),
    "mixedness": (((2,), 0.5), ((4,), 0.5)),
    "independence": (((2, 2), 1.0), ((2, 2), 0.75)),
    "collection-identity": (((2,), 0.75),),
    "collection-independence": (((2, 2), 0.75),),
    "collection-both": (((2, 2), 0.75),),
    "condindep": (((2, 2), 0.3),),
}


def _worst_error(
    tester: str,
    setting: str,
    grid,
    cfg: TesterConfig,
    trials: int,
    seed: int,
) -> float:
    worst = 0.0
    for layout, eps in grid:
        spec = ExperimentSpec(
            tester=tester,
            layout=tuple(layout),
            epsilons=(eps,),
            trials=trials,
            setting=setting,
            seed=seed,
            config=cfg,
        )
        pt = run_experiment(spec).points[0]
        worst = max(worst, 1.0 - pt.yes_rate, 1.0 - pt.no_rate)
    return worst


def calibrate(
    tester: str,
    grid=None,
    *,
    setting: str = "collective",
    max_error: float = 1.0 / 3.0,
    trials: int = 120,
    seed: int = 2026,
    start: float = 1.0,
    doublings: int = 14,
    base_config: TesterConfig = testers.DEFAULT_CONFIG,
    out: str | None = None,
) -> dict[str, float]:
    """Smallest constant on a doubling ladder meeting the error target.

    Runs the tester on every (layout, eps) point of the grid with the
    candidate constant, requiring both the yes-error and the no-error to stay
    at or below ``max_error`` at every point.  The first (smallest) passing
    value wins; the ladder is start * 2^j for j < doublings.  Raises
    CalibrationFailed when the ladder is exhausted.
    """
    if tester not in TESTER_IDS:
        raise BadSpec(f"tester must be one of {TESTER_IDS}, got {tester!r}")
    if grid is None:
        grid = CALIBRATION_GRIDS[tester]
    field_name = _constant_field(tester, setting)
    for j in range(doublings):
        value = start * 2.0**j
        cfg = dataclasses.replace(base_config, **{field_name: value})
        worst = _worst_error(tester, setting, grid, cfg, trials, seed)
        if worst <= max_error:
            result = {field_name: value, "worst_error": worst}
            if out is not None:
                _write_constants(out, {field_name: value})
            return result
    raise CalibrationFailed(
        f"no {field_name} in [{start}, {start * 2.0 ** (doublings - 1)}] reached "
        f"error <= {max_error} for {tester}/{setting}"
    )


def _write_constants(path: str, constants: dict[str, float]) -> None:
    try:
        with open(path, "w") as fh:
            fh.write("# calibrated constants; load with --config\n")
            for k, v in constants.items():
                fh.write(f"{k} = {v}\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_config(path: str) -> dict[str, str]:
    """Parse the key = value config format (# comments, blank lines ok)."""
    out: dict[str, str] = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise BadSpec(f"{path}:{lineno}: expected key = value, got {line!r}")
                k, v = line.split("=", 1)
                out[k.strip()] = v.strip()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return out


# ---------------------------------------------------------------------------
# Self-checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SelfCheck:
    name: str
    ok: bool
    detail: str


@dataclass(frozen=True)
class SelftestReport:
    checks: tuple[SelfCheck, ...]
    elapsed: float

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def summary(self) -> str:
        lines = [
            f"[{'ok' if c.ok else 'FAIL'}] {c.name}: {c.detail}" for c in self.checks
        ]
        verdictline = "PASS" if self.passed else "FAIL"
        lines.append(f"{verdictline} ({len(self.checks)} checks, {self.elapsed:.1f}s)")
        return "\n".join(lines)


def selftest(seed: int = 7) -> SelftestReport:
    """Fast re-verification of the load-bearing identities.

    Covers MUB unbiasedness/completeness, the channel isometry, estimator
    unbiasedness, budget accounting, and the threshold-function bounds; runs
    in seconds so it can gate every deployment.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    checks: list[SelfCheck] = []

    worst_unb = worst_comp = 0.0
    for d in (2, 4, 8):
        res = mub.family_residuals(mub.mub_family(d))
        worst_unb = max(worst_unb, res["unbiasedness"])
        worst_comp = max(worst_comp, res["completeness"])
    checks.append(
        SelfCheck(
            "mub-unbiasedness", worst_unb <= 1e-8 and worst_comp <= 1e-9,
            f"max |overlap^2 - 1/d| = {worst_unb:.2e}, completeness {worst_comp:.2e}",
        )
    )

    worst_iso = 0.0
    for d in (2, 4):
        fam = mub.mub_family(d)
        for _ in range(20):
            rho = random_mixed(d, d, rng)
            sigma = random_mixed(d, d, rng)
            p = mub.channel_probabilities(rho, fam)
            q = mub.channel_probabilities(sigma, fam)
            worst_iso = max(
                worst_iso,
                abs((d + 1) * float(np.linalg.norm(p - q)) - l2_distance(rho, sigma)),
            )
    checks.append(
        SelfCheck("channel-isometry", worst_iso <= 1e-8, f"max deviation {worst_iso:.2e}")
    )

    p = np.array([0.4, 0.3, 0.2, 0.1])
    q = np.array([0.1, 0.2, 0.3, 0.4])
    m = 3000.0
    reps = 400
    g = np.random.default_rng(seed + 1)
    zs = [
        cdvv_statistic(poissonized_counts(p, m, g), poissonized_counts(q, m, g)) / m**2
        for _ in range(reps)
    ]
    target = float(np.sum((p - q) ** 2))
    se = float(np.std(zs)) / math.sqrt(reps)
    dev = abs(float(np.mean(zs)) - target)
    checks.append(
        SelfCheck(
            "closeness-unbiased", dev <= 4 * se + 1e-12,
            f"|mean - l2^2| = {dev:.2e} vs 4 se = {4 * se:.2e}",
        )
    )

    lay = SystemLayout((2, 2))
    src = testers.source(
        interpolate_toward(
            maximally_mixed(4), _rotated_entangled(lay, rng), 0.5
        ),
        lay,
    )
    v = testers.bipartite_independence(src, 0.9, "collective", stream=RngStream(seed))
    expect = testers.bipartite_independence_budget(lay, 0.9, "collective")
    checks.append(
        SelfCheck(
            "budget-accounting", v.copies_used == expect == src.drawn,
            f"copies_used {v.copies_used}, closed form {expect}",
        )
    )

    gamma = 1.0 - 5.0 / (2.0 * math.e)
    xs = np.logspace(-3, 2, 120)
    margin = min(
        testers.truncated_poisson_mean(float(x)) - gamma * min(float(x), float(x) ** 4)
        for x in xs
    )
    xi_ok = abs(testers.xi_threshold(1000, 0.5, 2, 2, 4) - 0.6273546646202669) <= 1e-12
    checks.append(
        SelfCheck(
            "threshold-bounds", margin >= -1e-12 and xi_ok,
            f"truncation-bound margin {margin:.2e}, xi hand value ok={xi_ok}",
        )
    )

    pair = make_fixture("identity", SystemLayout((2,)), 0.5, rng)
    far, ref = pair.no_instance
    checks.append(
        SelfCheck(
            "fixture-planting", abs(l1_distance(far, ref) - 1.0) <= 1e-9,
            f"planted identity distance {l1_distance(far, ref):.12f} (want 1.0)",
        )
    )

    return SelftestReport(tuple(checks), time.perf_counter() - t0)
