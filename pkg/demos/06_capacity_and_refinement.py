"""
Capacity: distributed storage degrades gracefully, and refinement helps
=======================================================================

Two closing experiments on the trained model.

First, capacity. The memory has K=8 rows, yet episodes of 16 patterns can
be written into it. Storage is distributed -- every pattern spreads over
all rows -- so overloading the memory does not hit a wall: the per-pattern
retrieval error barely moves. The sweep below writes episodes of 4 and of
16 patterns drawn from two classes and scores how well each written pattern
reads back (a negative log-likelihood per pattern: lower is better). With
two classes, a longer episode mostly re-writes the same prototypes, and a
repeated write is extra evidence, so the error can even fall slightly.

Second, refinement. Writing infers an address for each pattern against the
memory as it was *before* that pattern arrived. A refinement pass revisits
every pattern afterwards and re-addresses it against the finished memory,
re-conditioning on the improved addresses. That extra half-sweep can only
use more information than the first pass had, and the episode-level
evidence bound reflects it: refined writes score at least as high.
"""

import numpy as np

from attractor_memory import (Episode, PortableRng, bounds, prior_state,
                              read_episode, run_capacity, write_episode)
from demo_support import trained_model

params, corpus = trained_model()

# ----------------------------------------------------------------- capacity
rows = run_capacity(params, corpus, episode_lengths=[4, 16],
                    n_classes_list=[2], trials=10, seed=21)
print("\nper-pattern retrieval error vs episode length (10 trials each):")
for r in rows:
    print(f"  wrote {r['length']:2d} patterns from {r['n_classes']} classes: "
          f"mean error {r['mean_error']:.3f}")
ratio = rows[1]["mean_error"] / rows[0]["mean_error"]
print(f"  4x the load changes the error by a factor of {ratio:.2f}")

# --------------------------------------------------------------- refinement
print("\nepisode evidence bound, plain write vs one refinement pass:")
rng = PortableRng(22)
deltas = []
for trial in range(8):
    idx = rng.choice_no_replace(len(corpus), 3)
    ep = Episode(corpus.patterns[idx])
    mem0 = prior_state(params)
    score = {}
    for refine in (0, 1):
        wr = write_episode(params, mem0, ep, refine_iters=refine)
        reads = read_episode(params, wr.memory, ep, sample=False)
        score[refine] = bounds(params, mem0, wr, reads, ep,
                               compute_bt=True).bound_BT
    deltas.append(score[1] - score[0])
    print(f"  episode {trial}: {score[0]:9.3f} -> {score[1]:9.3f}   "
          f"(improvement {score[1] - score[0]:+.3f})")

print(f"\nrefinement improved the bound in {sum(d >= 0 for d in deltas)}/8 "
      f"episodes (mean improvement {np.mean(deltas):+.3f})")

assert ratio < 1.5
assert all(d >= -1e-9 for d in deltas)
print("\nDistributed storage absorbs a 4x overload; refinement never hurts.")
