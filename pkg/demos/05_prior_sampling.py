"""
Generating from the memory: prior samples that settle into stored patterns
==========================================================================

The memory is generative: drawing addressing weights from their prior
N(0, I), reading at those weights, and decoding produces a pattern from the
model's distribution. Raw draws are blurry mixtures of the stored content,
so each one is handed to the attractor, which walks it downhill in energy
until it settles. The interesting question is *where* the samples land.

This script stores four patterns, draws twelve prior samples, cleans them
up, and reports each sample's distance to the nearest stored pattern --
most land exactly on one, which is what "the stored patterns are the
attractors of the retrieval map" means in practice.
"""

import numpy as np

from attractor_memory import (Episode, PortableRng, prior_state, sample_prior,
                              synthetic_prototypes, write_episode)
from demo_support import trained_model

params, corpus = trained_model()

protos = synthetic_prototypes(n_classes=8, dim=36, seed=101)
stored = protos[:4]
mem = write_episode(params, prior_state(params), Episode(stored)).memory
print(f"stored patterns: 4 of the corpus's 8 prototypes\n")


def nearest_stored(x):
    dists = [int(np.sum(x.ravel() != s)) for s in stored]
    return int(np.argmin(dists)), min(dists)


# Each sample: w ~ N(0, I) in address space, x0 = decode(read(mem, w)),
# then up to 30 attractor steps.
traces = sample_prior(params, mem, n_samples=12, max_iters=30,
                      rng=PortableRng(11))

print("sample   start->final bits from nearest stored   energy start->final")
landed = 0
for i, tr in enumerate(traces):
    _, d0 = nearest_stored(tr.states[0])
    which, d1 = nearest_stored(tr.final_pattern)
    landed += d1 == 0
    label = f"= stored {which}" if d1 == 0 else f"near stored {which}"
    print(f"  {i:2d}     {d0:2d} -> {d1:2d}  {label:14s}   "
          f"{tr.energies[0]:8.2f} -> {tr.energies[-1]:8.2f}")

print(f"\nsamples landing exactly on a stored pattern: {landed}/12")

# Which basins get visited tells you how the prior mass is spread over the
# stored content. A memory that always produced the same pattern would be a
# poor generator; here several distinct basins are reachable from N(0, I).
finals = {nearest_stored(tr.final_pattern)[0] for tr in traces
          if nearest_stored(tr.final_pattern)[1] == 0}
print(f"distinct stored patterns reached: {sorted(finals)}")

assert landed >= 6
print("\nPrior draws, cleaned up by the attractor, regenerate stored content.")
