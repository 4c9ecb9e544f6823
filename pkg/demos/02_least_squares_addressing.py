"""
Addressing as regularized least squares
=======================================

To retrieve from the memory you first need to know *where to look*. Given an
embedding z, the addressing weights are the minimizer of

    || z - R^T mu ||^2 / (2 sigma_xi_sq)  +  || mu ||^2 / 2,

i.e. ridge regression of the query onto the rows of the memory. The library
computes it with a symmetric positive-definite solve of
(R R^T + sigma_xi_sq I) mu = R z -- never an explicit matrix inverse.

This script verifies the optimality claim numerically and then shows what
addressing does in practice: content written at a random address is found
again by addressing with the content alone.
"""

import numpy as np

from attractor_memory import MemoryState, address, prior, read, update

rng = np.random.default_rng(1)

K, C = 6, 4          # 6 storage rows, content width 4
noise = 0.7          # observation noise variance sigma_xi_sq
R = rng.standard_normal((K, C))
mem = MemoryState(R=R, U=np.eye(K), sigma_xi_sq=noise)
z = rng.standard_normal((C, 1))

# ----------------------------------------------------- the solver is correct
mu = address(mem, z)
explicit = np.linalg.inv(R @ R.T + noise * np.eye(K)) @ R @ z
print("max |SPD solve - explicit inverse|:",
      f"{np.abs(mu - explicit).max():.2e}")


# -------------------------------------------------- the optimum is an optimum
def cost(m):
    r = z - R.T @ m
    return (r.T @ r).item() / (2 * noise) + (m.T @ m).item() / 2


base = cost(mu)
worse = 0
for _ in range(200):
    step = rng.standard_normal((K, 1))
    step *= 1e-3 / np.linalg.norm(step)
    worse += cost(mu + step) > base
print(f"random 1e-3 perturbations that cost more: {worse}/200")

# ------------------------------------------------------- write, then find it
# Store three content vectors at three random addresses. Afterwards, address
# the memory with each content vector alone; reading at the resulting weights
# should give back (approximately) that content. The memory never saw the
# content's address at query time -- the least-squares step rediscovers it.
store = prior(rows=K, code_size=C, sigma_U_sq=1.0, sigma_xi_sq=noise, seed=2)
contents = [rng.standard_normal((C, 1)) for _ in range(3)]
addresses = [rng.standard_normal((K, 1)) for _ in range(3)]
for w, zc in zip(addresses, contents):
    for _ in range(12):                     # write repeatedly to be confident
        store = update(store, w, zc)

print("\nquery with content only, read back at the inferred address:")
for i, zc in enumerate(contents):
    w_hat = address(store, zc)
    z_back = read(store, w_hat)
    rel = np.linalg.norm(z_back - zc) / np.linalg.norm(zc)
    print(f"  content {i}: relative read-back error {rel:.3f}")

# The residuals have two sources: the ridge penalty shrinks the weights, and
# three items share six rows of storage, so they interfere a little. The
# attractor demos (04, 05) show how iterated retrieval cleans that up.
assert np.abs(mu - explicit).max() < 1e-9
assert worse == 200
print("\nAddressing is exactly the regularized least-squares solution.")
