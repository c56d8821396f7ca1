"""Calibrated constants shipped with the testers.

The ladder constants below were chosen by `mubtest.harness.calibrate`
doubling-ladder sweeps (smallest power-of-two value whose worst-case error
over the calibration grid stayed at or below the target, 240 trials, seed
2026), run in two stages: the primitive-tester constants (CLOSENESS_C,
COLLECTIVE_C, SWAP_C) at a 0.10 error target, because composed schedules —
collection levels, the halving recursion — amplify the per-invocation error
of the primitives and the collection flag-any rule only converges when that
error stays under roughly 10%; then the leaf multipliers (COLLECTION_L,
CONDINDEP_L_*) at the end-to-end 0.20 target with the primitives frozen.
Each constant is the max over every (tester, setting) pair that consumes it.
Override per run via TesterConfig(...) or the CLI --const-C / --const-L
flags.
"""

# two-sample l2 closeness tester (per-side Poisson parameter C * b / eps2^2);
# also drives the MUB-channel identity testers and the local-channel testers.
CLOSENESS_C = 8.0

# collective-measurement identity tester: n = C * d' / eps^2 copies per side.
COLLECTIVE_C = 4.0

# swap-circuit identity tester: ceil(C / eps2^4) batches of 4 copies.
SWAP_C = 1024.0

# collection testers: base number of index draws per level is ceil(2^{1.5 k} L)
COLLECTION_L = 1.0

# per-level amplification r_k = odd(ceil(scale * (k ln 6 + 2 ln L))); fixed,
# not on the ladder (the ladder tunes the draw count L against it)
LEVEL_REP_SCALE = 1.2

# majority repetitions per stage of the halving recursion (multipartite
# independence) and for each half of the composed collection tester; fixed
# odd counts, not on the ladder
AMP_REPS = 5
COMPOSE_REPS = 5

# conditional independence: overall sample-size multiplier L per setting.
# The accept-side statistic fluctuates with a spread that does not shrink as
# m grows (each label bucket contributes O(1) noise), while the threshold xi
# grows linearly in L, so L has to clear the noise floor outright.
CONDINDEP_L_COLLECTIVE = 128.0
CONDINDEP_L_INDEPENDENT = 512.0
