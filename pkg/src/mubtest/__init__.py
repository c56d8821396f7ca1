"""Copy-efficient certification testers for quantum states.

Dense, desk-scale (total dimension <= 256) simulation of property testers
built on mutually unbiased bases: identity and mixedness certification,
independence testing, collection testers, and conditional-independence
testing, together with the classical distribution statistics they reduce to
and a reproducible experiment harness.
"""

from mubtest.states import (
    DensityMatrix,
    SystemLayout,
    StatePair,
    validate,
    tensor,
    partial_trace,
    l1_distance,
    l2_distance,
    distance_to_product,
    random_pure,
    random_mixed,
    interpolate_toward,
)
from mubtest.mub import (
    mub_family,
    mub_povm,
    local_mub_povm,
    channel_probabilities,
    local_channel_probabilities,
)
from mubtest.sampling import RngStream
from mubtest.testers import (
    TesterConfig,
    DEFAULT_CONFIG,
    Verdict,
    source,
    uniform_source,
    identity_test,
    mixedness,
    bipartite_independence,
    mpartite_independence,
    local_independence,
    CollectionOracle,
    WeightedCollection,
    collection_identity,
    collection_independence,
    collection_identity_independence,
    CqqState,
    cond_indep_collective,
    cond_indep_independent,
)
from mubtest.harness import (
    ExperimentSpec,
    make_fixture,
    run_experiment,
    calibrate,
    selftest,
    wilson_lower,
)

__all__ = [
    "DensityMatrix",
    "SystemLayout",
    "StatePair",
    "validate",
    "tensor",
    "partial_trace",
    "l1_distance",
    "l2_distance",
    "distance_to_product",
    "random_pure",
    "random_mixed",
    "interpolate_toward",
    "mub_family",
    "mub_povm",
    "local_mub_povm",
    "channel_probabilities",
    "local_channel_probabilities",
    "RngStream",
    "TesterConfig",
    "DEFAULT_CONFIG",
    "Verdict",
    "source",
    "uniform_source",
    "identity_test",
    "mixedness",
    "bipartite_independence",
    "mpartite_independence",
    "local_independence",
    "CollectionOracle",
    "WeightedCollection",
    "collection_identity",
    "collection_independence",
    "collection_identity_independence",
    "CqqState",
    "cond_indep_collective",
    "cond_indep_independent",
    "ExperimentSpec",
    "make_fixture",
    "run_experiment",
    "calibrate",
    "selftest",
    "wilson_lower",
]

__version__ = "0.1.0"
