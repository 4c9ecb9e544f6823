"""
Denoising by iterated retrieval
===============================

A single read from the memory is already a decent reconstruction; iterating
it is better. The retrieval map (encode -> address -> read -> decode) treats
the stored patterns as attractors: starting from a corrupted pattern, each
pass pulls the state closer to the stored original, and an energy score
(reconstruction error plus addressing cost) tracks the descent.

This script stores four 36-bit patterns, flips 15% of one pattern's bits,
and watches the attractor walk back to the original. Then it repeats the
experiment 20 times to show the behavior is typical, not a lucky seed.
"""

import numpy as np

from attractor_memory import (Episode, NoiseSpec, PortableRng, inject_noise,
                              iterate, prior_state, run_denoise,
                              synthetic_prototypes, write_episode)
from demo_support import trained_model

params, corpus = trained_model()

# Store the first four prototypes in a fresh memory (one exact Bayes write
# per pattern -- no gradient steps happen at storage time).
protos = synthetic_prototypes(n_classes=8, dim=36, seed=101)
stored = protos[:4]
mem = write_episode(params, prior_state(params), Episode(stored)).memory
print(f"stored {len(stored)} patterns of {stored.shape[1]} bits\n")


def hamming(a, b):
    return int(np.sum(a.ravel() != b.ravel()))


# ------------------------------------------------------- one trial, in full
target = stored[0]
noisy = inject_noise(target, NoiseSpec("salt_pepper", 0.15),
                     PortableRng(42))
print(f"corrupted pattern 0: {hamming(noisy, target)} of 36 bits flipped")

trace = iterate(params, mem, noisy, max_iters=10)
print("\n  iter   bits wrong   energy")
for i, step in enumerate(trace.iterations):
    print(f"  {i:4d}   {hamming(trace.states[i], target):10d}   "
          f"{step.energy:8.3f}")
print(f"converged to a fixed point: {trace.converged}")

# ------------------------------------------------- twenty trials, summarized
# Each trial picks a stored pattern, corrupts 15% of its bits, and runs the
# attractor for up to 10 steps. The summary compares Hamming distance to the
# original before and after.
rows, summaries, _ = run_denoise(params, stored,
                                 NoiseSpec("salt_pepper", 0.15),
                                 trials=20, max_iters=10, seed=7)
initial = [s.initial_hamming for s in summaries]
final = [s.final_hamming for s in summaries]
fully_clean = sum(f == 0 for f in final)
energy_down = sum(s.final_energy <= s.initial_energy for s in summaries)

print(f"\n20 trials at 15% corruption:")
print(f"  bits wrong before: median {np.median(initial):.0f}, "
      f"worst {max(initial)}")
print(f"  bits wrong after:  median {np.median(final):.0f}, "
      f"worst {max(final)}")
print(f"  perfectly restored: {fully_clean}/20")
print(f"  energy decreased:   {energy_down}/20")

assert np.median(final) <= 0.3 * max(1, np.median(initial))
print("\nIterated retrieval repairs heavily corrupted stored patterns.")
