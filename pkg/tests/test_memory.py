"""Memory distribution: Bayes-update oracle via direct Gaussian conditioning,
addressing optimality, KL closed forms vs Monte Carlo, state invariants."""

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from attractor_memory import tape as T
from attractor_memory.errors import (DimensionError, DomainError,
                                     NumericalError)
from attractor_memory.memory import (AddressPosterior, MemoryState, address,
                                     kl_memory, kl_weights, prior, read,
                                     update, validate)


def random_state(K, C, rng, sigma_xi_sq=1.0):
    A = rng.standard_normal((K, K))
    return MemoryState(R=rng.standard_normal((K, C)),
                       U=A @ A.T + 0.5 * np.eye(K),
                       sigma_xi_sq=sigma_xi_sq)


def col(v):
    return np.asarray(v, dtype=float).reshape(-1, 1)


# ---------------------------------------------------------------------- prior

def test_prior_pinned_examples():
    m = prior(2, 2, sigma_U_sq=1.0, sigma_xi_sq=1.0, seed=3)
    assert np.array_equal(m.U, np.eye(2))
    m2 = prior(2, 2, sigma_U_sq=0.5, seed=3)
    assert np.array_equal(m2.U, 0.5 * np.eye(2))
    assert np.array_equal(m.R, prior(2, 2, seed=3).R)
    big = prior(100, 80, seed=9)
    assert abs(np.mean(big.R)) < 0.05 and abs(np.std(big.R) - 1.0) < 0.05


def test_prior_rejects_bad_arguments():
    with pytest.raises(DimensionError):
        prior(0, 3)
    with pytest.raises(DomainError):
        prior(2, 2, sigma_U_sq=0.0)
    with pytest.raises(DomainError):
        prior(2, 2, sigma_xi_sq=-1.0)


# ----------------------------------------------------------------------- read

def test_read_pinned_examples():
    R = np.array([[1.0, 0.0], [0.0, 2.0]])
    mem = MemoryState(R=R, U=np.eye(2), sigma_xi_sq=1.0)
    assert np.array_equal(read(mem, col([1, 0])), col([1, 0]))
    assert np.array_equal(read(mem, col([0, 1])), col([0, 2]))
    assert np.array_equal(read(mem, col([0, 0])), col([0, 0]))
    assert np.array_equal(read(mem, col([1, 1])), col([1, 2]))


# --------------------------------------------------------------------- update

def test_update_zero_residual_keeps_mean_halves_row_variance():
    rng = np.random.default_rng(0)
    R = rng.standard_normal((3, 2))
    mem = MemoryState(R=R, U=np.eye(3), sigma_xi_sq=1.0)
    w = col([1, 0, 0])
    out = update(mem, w, read(mem, w))
    assert np.array_equal(out.R, R)          # exact: innovation is zero
    expect_U = np.eye(3)
    expect_U[0, 0] = 0.5
    assert np.allclose(out.U, expect_U, atol=1e-15)


def test_update_scalar_memory_hand_values():
    R = np.array([[0.3, -0.7]])
    mem = MemoryState(R=R, U=np.array([[1.0]]), sigma_xi_sq=1.0)
    d = np.array([0.4, 1.0])
    out = update(mem, col([1.0]), col(R.reshape(-1) + d))
    assert np.allclose(out.R, R + d.reshape(1, -1) / 2.0, atol=1e-15)
    assert np.allclose(out.U, [[0.5]], atol=1e-15)


def batch_conditioning(R0, U0, sigma_xi_sq, ws, zs):
    """Direct Gaussian conditioning on vec(M) (column stacking), the
    independent oracle for the sequential rank-one updates."""
    K, C = R0.shape
    S = np.kron(np.eye(C), U0)
    m = R0.flatten(order="F")
    A = np.vstack([np.kron(np.eye(C), w.reshape(1, -1)) for w in ws])
    y = np.concatenate([z.reshape(-1) for z in zs])
    prec = np.linalg.inv(S) + A.T @ A / sigma_xi_sq
    cov = np.linalg.inv(prec)
    mean = cov @ (np.linalg.inv(S) @ m + A.T @ y / sigma_xi_sq)
    return mean.reshape(K, C, order="F"), cov


def test_sequential_updates_equal_direct_conditioning():
    rng = np.random.default_rng(7)
    for K, C, Tn in [(4, 3, 5), (2, 2, 1), (3, 4, 6)]:
        mem = MemoryState(R=rng.standard_normal((K, C)),
                          U=1.3 * np.eye(K), sigma_xi_sq=0.7)
        ws = [rng.standard_normal(K) for _ in range(Tn)]
        zs = [rng.standard_normal(C) for _ in range(Tn)]
        seq = mem
        for w, z in zip(ws, zs):
            seq = update(seq, col(w), col(z))
        mean, cov = batch_conditioning(mem.R, mem.U, mem.sigma_xi_sq, ws, zs)
        assert np.max(np.abs(seq.R - mean)) <= 1e-8
        assert np.max(np.abs(np.kron(np.eye(C), seq.U) - cov)) <= 1e-8


def test_fixed_address_order_invariance():
    rng = np.random.default_rng(21)
    K, C, Tn = 3, 2, 5
    mem = random_state(K, C, rng)
    ws = [rng.standard_normal(K) for _ in range(Tn)]
    zs = [rng.standard_normal(C) for _ in range(Tn)]

    def run(order):
        out = mem
        for i in order:
            out = update(out, col(ws[i]), col(zs[i]))
        return out

    base = run(range(Tn))
    for s in range(20):
        perm = np.random.default_rng(100 + s).permutation(Tn)
        other = run(perm)
        assert np.max(np.abs(other.R - base.R)) <= 1e-8
        assert np.max(np.abs(other.U - base.U)) <= 1e-8


def test_update_preserves_pd_and_contracts_variance():
    rng = np.random.default_rng(5)
    mem = random_state(5, 3, rng)
    for _ in range(50):
        w = col(rng.standard_normal(5))
        z = col(rng.standard_normal(3))
        nxt = update(mem, w, z)
        assert np.max(np.abs(nxt.U - nxt.U.T)) <= 1e-10
        np.linalg.cholesky(nxt.U)                     # PD preserved
        assert np.trace(nxt.U) < np.trace(mem.U)      # strict: U w != 0
        validate(nxt)
        mem = nxt


def test_update_with_zero_weights_is_identity():
    rng = np.random.default_rng(6)
    mem = random_state(4, 2, rng)
    out = update(mem, col([0, 0, 0, 0]), col([1.0, -1.0]))
    assert np.array_equal(out.R, mem.R)
    assert np.trace(out.U) == np.trace(mem.U)


def test_update_rejects_nonpositive_innovation_variance():
    bad = MemoryState(R=np.zeros((2, 2)), U=np.diag([1.0, -2.0]),
                      sigma_xi_sq=1.0)
    with pytest.raises(NumericalError):
        update(bad, col([0, 1]), col([0, 0]))


def test_update_traced_matches_plain_bitwise():
    rng = np.random.default_rng(12)
    plain = random_state(3, 2, rng)
    w, z = col(rng.standard_normal(3)), col(rng.standard_normal(2))
    got = update(plain, w, z)
    tape = T.Tape()
    traced = MemoryState(R=tape.leaf(plain.R), U=tape.leaf(plain.U),
                         sigma_xi_sq=plain.sigma_xi_sq)
    got_t = update(traced, tape.leaf(w), tape.leaf(z))
    assert np.array_equal(T.value(got_t.R), got.R)
    assert np.array_equal(T.value(got_t.U), got.U)


# -------------------------------------------------------------------- address

def test_address_pinned_examples():
    mem = MemoryState(R=np.eye(3), U=np.eye(3), sigma_xi_sq=1.0)
    z = col([1.0, -2.0, 0.5])
    assert np.allclose(address(mem, z), z / 2.0, atol=1e-12)
    assert np.array_equal(address(mem, col([0, 0, 0])), col([0, 0, 0]))
    mem1 = MemoryState(R=np.array([[2.0, 0.0]]), U=np.eye(1), sigma_xi_sq=1.0)
    assert np.allclose(address(mem1, col([2.0, 0.0])), [[0.8]], atol=1e-12)


def test_address_matches_explicit_inverse():
    rng = np.random.default_rng(31)
    for K, C in [(2, 3), (4, 4), (6, 2)]:
        mem = random_state(K, C, rng, sigma_xi_sq=0.8)
        z = col(rng.standard_normal(C))
        direct = np.linalg.inv(mem.R @ mem.R.T + 0.8 * np.eye(K)) @ mem.R @ z
        assert np.max(np.abs(address(mem, z) - direct)) <= 1e-9


def quadratic_objective(mem, z, mu):
    r = z - mem.R.T @ mu
    return (r.T @ r).item() / (2 * mem.sigma_xi_sq) + 0.5 * (mu.T @ mu).item()


def test_address_is_the_quadratic_minimizer():
    rng = np.random.default_rng(55)
    mem = random_state(5, 4, rng)
    z = col(rng.standard_normal(4))
    mu = address(mem, z)
    at_mu = quadratic_objective(mem, z, mu)
    for _ in range(100):
        d = rng.standard_normal((5, 1))
        d *= 1e-3 / np.linalg.norm(d)
        assert quadratic_objective(mem, z, mu + d) >= at_mu


# ----------------------------------------------------------------- kl_weights

def test_kl_weights_pinned_examples():
    assert kl_weights(AddressPosterior(col([0, 0]), 1.0)) == 0.0
    assert abs(kl_weights(AddressPosterior(col([1, 0]), 1.0)) - 0.5) < 1e-15
    got = kl_weights(AddressPosterior(col([0.0]), 0.3))
    assert abs(got - 0.5 * (0.3 - 1.0 - np.log(0.3))) < 1e-12
    assert abs(got - 0.2519864) < 1e-6


def test_kl_weights_matches_monte_carlo():
    rng = np.random.default_rng(70)
    for _ in range(4):
        K = int(rng.integers(1, 5))
        mu = rng.standard_normal(K)
        s2 = float(rng.uniform(0.2, 2.5))
        closed = kl_weights(AddressPosterior(col(mu), s2))
        draws = mu + np.sqrt(s2) * rng.standard_normal((200_000, K))
        lq = multivariate_normal(mu, s2 * np.eye(K)).logpdf(draws)
        lp = multivariate_normal(np.zeros(K), np.eye(K)).logpdf(draws)
        diff = lq - lp
        se = np.std(diff) / np.sqrt(len(diff))
        assert abs(np.mean(diff) - closed) <= 3 * se


def test_kl_weights_rejects_nonpositive_variance():
    with pytest.raises(DomainError):
        kl_weights(AddressPosterior(col([0.0]), 0.0))
    with pytest.raises(DomainError):
        kl_weights(AddressPosterior(col([0.0]), -0.1))


def test_kl_weights_traced_matches_plain():
    mu = col([0.4, -1.2, 2.0])
    plain = kl_weights(AddressPosterior(mu, 0.7))
    tape = T.Tape()
    node = kl_weights(AddressPosterior(tape.leaf(mu), tape.leaf(T.as_cell(0.7))))
    assert T.scalar_value(node) == plain


# ------------------------------------------------------------------ kl_memory

def test_kl_memory_pinned_examples():
    rng = np.random.default_rng(3)
    q = random_state(3, 2, rng)
    assert abs(kl_memory(q, q)) < 1e-10
    p = MemoryState(R=np.zeros((2, 2)), U=np.eye(2), sigma_xi_sq=1.0)
    shifted = MemoryState(R=np.array([[1.0, 0.0], [0.0, 0.0]]),
                          U=np.eye(2), sigma_xi_sq=1.0)
    assert abs(kl_memory(shifted, p) - 0.5) < 1e-12
    q1 = MemoryState(R=np.zeros((1, 2)), U=np.array([[0.5]]), sigma_xi_sq=1.0)
    p1 = MemoryState(R=np.zeros((1, 2)), U=np.array([[1.0]]), sigma_xi_sq=1.0)
    expect = 0.5 * (2 * 0.5 - 2 + 2 * np.log(2.0))
    assert abs(kl_memory(q1, p1) - expect) < 1e-12
    assert abs(expect - 0.1931471) < 1e-6


def test_kl_memory_matches_monte_carlo():
    rng = np.random.default_rng(71)
    for _ in range(3):
        K, C = 2, 2
        q = random_state(K, C, rng)
        p = random_state(K, C, rng)
        closed = kl_memory(q, p)
        mq = multivariate_normal(q.R.flatten(order="F"), np.kron(np.eye(C), q.U))
        mp = multivariate_normal(p.R.flatten(order="F"), np.kron(np.eye(C), p.U))
        draws = mq.rvs(size=200_000, random_state=rng)
        diff = mq.logpdf(draws) - mp.logpdf(draws)
        se = np.std(diff) / np.sqrt(len(diff))
        assert abs(np.mean(diff) - closed) <= 3 * se


def test_kl_memory_positive_when_states_differ():
    rng = np.random.default_rng(72)
    for _ in range(5):
        q, p = random_state(3, 2, rng), random_state(3, 2, rng)
        assert kl_memory(q, p) > 0.0


def test_kl_memory_rejects_shape_mismatch():
    rng = np.random.default_rng(1)
    with pytest.raises(DimensionError):
        kl_memory(random_state(3, 2, rng), random_state(2, 2, rng))


# ------------------------------------------------------------------ contracts

def test_dimension_errors():
    rng = np.random.default_rng(2)
    mem = random_state(3, 2, rng)
    with pytest.raises(DimensionError):
        read(mem, col([1, 2]))
    with pytest.raises(DimensionError):
        update(mem, col([1, 2, 3]), col([1, 2, 3]))
    with pytest.raises(DimensionError):
        address(mem, col([1, 2, 3]))


def test_validate_rejects_bad_states():
    with pytest.raises(DimensionError):
        validate(MemoryState(R=np.zeros((2, 2)), U=np.eye(3), sigma_xi_sq=1.0))
    with pytest.raises(DomainError):
        validate(MemoryState(R=np.array([[np.nan, 0.0]]), U=np.eye(1),
                             sigma_xi_sq=1.0))
    with pytest.raises(DomainError):
        validate(MemoryState(R=np.zeros((2, 2)), U=np.eye(2), sigma_xi_sq=0.0))
    with pytest.raises(DomainError):
        validate(MemoryState(R=np.zeros((2, 2)),
                             U=np.array([[1.0, 0.5], [0.4, 1.0]]),
                             sigma_xi_sq=1.0))
    from attractor_memory.errors import NotPositiveDefinite
    with pytest.raises(NotPositiveDefinite):
        validate(MemoryState(R=np.zeros((2, 2)), U=np.diag([1.0, -1.0]),
                             sigma_xi_sq=1.0))
