"""Acceptance suite: ten end-to-end checks (A1-A10) covering exact posterior
equivalence, exchangeability, gradients, KL closed forms, addressing
optimality, trained-model retrieval behavior, capacity, refinement, and
persistence. Each test prints one always-visible PASS/FAIL line."""

import math
import time

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from attractor_memory.cli import main as cli_main
from attractor_memory.data import NoiseSpec
from attractor_memory.episodic import (Episode, bounds, prior_state,
                                       read_episode, write_episode)
from attractor_memory.memory import (AddressPosterior, MemoryState, address,
                                     kl_memory, kl_weights, update)
from attractor_memory.model import param_arrays
from attractor_memory.persist import load_model, save_model
from attractor_memory.experiments import (run_capacity, run_denoise,
                                          run_gradcheck, run_sample)
from attractor_memory.rng import PortableRng


@pytest.fixture
def verdict(capsys):
    """One always-visible pass/fail line per criterion, shown even under
    pytest's output capture."""
    def emit(label: str, passed: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"{label}: {'PASS' if passed else 'FAIL'} ({detail})",
                  flush=True)
    return emit


def rand_spd(rng, k, jitter=0.5):
    A = rng.standard_normal((k, k))
    return A @ A.T + jitter * np.eye(k)


# --------------------------------------------------------------------- A1

def test_a1_sequential_updates_match_direct_conditioning(verdict):
    """Folding observations in one at a time must equal conditioning the full
    KC-dimensional Gaussian over the flattened memory on all of them at once."""
    start = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for K, C, T in ((4, 3, 5), (2, 2, 1), (3, 3, 4)):
        R0 = rng.standard_normal((K, C))
        U0 = rand_spd(rng, K)
        noise = 0.7
        ws = rng.standard_normal((T, K, 1))
        zs = rng.standard_normal((T, C, 1))

        mem = MemoryState(R=R0.copy(), U=U0.copy(), sigma_xi_sq=noise)
        for t in range(T):
            mem = update(mem, ws[t], zs[t])

        S = np.kron(np.eye(C), U0)
        m = R0.flatten(order="F")
        A = np.vstack([np.kron(np.eye(C), ws[t].T) for t in range(T)])
        y = np.concatenate([zs[t].ravel() for t in range(T)])
        S_inv = np.linalg.inv(S)
        prec = S_inv + A.T @ A / noise
        cov = np.linalg.inv(prec)
        mean = cov @ (S_inv @ m + A.T @ y / noise)

        worst = max(worst,
                    np.max(np.abs(mem.R.flatten(order="F") - mean)),
                    np.max(np.abs(np.kron(np.eye(C), mem.U) - cov)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 1.0
    verdict("A1 sequential-vs-direct posterior", ok,
            f"max_abs_err={worst:.2e}<=1e-8, {elapsed:.2f}s<1s")
    assert worst <= 1e-8
    assert elapsed < 1.0


# --------------------------------------------------------------------- A2

def test_a2_fixed_address_updates_commute(verdict):
    rng = np.random.default_rng(22)
    K, C, T = 4, 3, 5
    R0 = rng.standard_normal((K, C))
    U0 = rand_spd(rng, K)
    ws = [rng.standard_normal((K, 1)) for _ in range(T)]
    zs = [rng.standard_normal((C, 1)) for _ in range(T)]

    def run(order):
        mem = MemoryState(R=R0.copy(), U=U0.copy(), sigma_xi_sq=1.0)
        for t in order:
            mem = update(mem, ws[t], zs[t])
        return mem

    base = run(range(T))
    worst = 0.0
    for _ in range(20):
        perm = rng.permutation(T)
        got = run(perm)
        worst = max(worst, np.max(np.abs(got.R - base.R)),
                    np.max(np.abs(got.U - base.U)))
    ok = worst <= 1e-8
    verdict("A2 fixed-address exchangeability", ok,
            f"20 permutations, max_abs_diff={worst:.2e}<=1e-8")
    assert ok


# --------------------------------------------------------------------- A3

def test_a3_every_parameter_gradient_matches_finite_differences(verdict):
    start = time.perf_counter()
    rows, max_rel, passed = run_gradcheck(dim_in=6, code_size=3, mem_rows=4,
                                          episode_len=3, seed=0, h=1e-5,
                                          rel_tol=1e-4, abs_floor=1e-8)
    elapsed = time.perf_counter() - start
    ok = passed and elapsed < 30.0
    verdict("A3 end-to-end gradient check", ok,
            f"{len(rows)} coordinates, max_rel_err={max_rel:.2e}<=1e-4, "
            f"{elapsed:.1f}s<30s")
    assert passed
    assert elapsed < 30.0


# --------------------------------------------------------------------- A4

def test_a4_kl_closed_forms_match_monte_carlo(verdict):
    n = 1_000_000
    rng = np.random.default_rng(44)
    worst_sigma = 0.0

    for _ in range(10):
        k = int(rng.integers(1, 7))
        mu = rng.standard_normal((k, 1))
        s2 = float(rng.uniform(0.2, 3.0))
        closed = kl_weights(AddressPosterior(mu_w=mu, sigma_w_sq=s2))
        x = mu.ravel() + math.sqrt(s2) * rng.standard_normal((n, k))
        diff = (multivariate_normal(mu.ravel(), s2 * np.eye(k)).logpdf(x)
                - multivariate_normal(np.zeros(k), np.eye(k)).logpdf(x))
        se = diff.std(ddof=1) / math.sqrt(n)
        worst_sigma = max(worst_sigma, abs(closed - diff.mean()) / se)

    for _ in range(10):
        K, C = 3, 2
        q = MemoryState(R=rng.standard_normal((K, C)), U=rand_spd(rng, K),
                        sigma_xi_sq=1.0)
        p = MemoryState(R=rng.standard_normal((K, C)), U=rand_spd(rng, K),
                        sigma_xi_sq=1.0)
        closed = kl_memory(q, p)
        eps = rng.standard_normal((n, K, C))
        X = q.R + np.einsum("ij,njc->nic", np.linalg.cholesky(q.U), eps)
        diff = np.zeros(n)
        for c in range(C):
            diff += multivariate_normal(q.R[:, c], q.U).logpdf(X[:, :, c])
            diff -= multivariate_normal(p.R[:, c], p.U).logpdf(X[:, :, c])
        se = diff.std(ddof=1) / math.sqrt(n)
        worst_sigma = max(worst_sigma, abs(closed - diff.mean()) / se)

    ok = worst_sigma <= 3.0
    verdict("A4 KL closed forms vs Monte Carlo", ok,
            f"20 instances x 1e6 samples, worst |closed-mc|={worst_sigma:.2f} SE<=3")
    assert ok


# --------------------------------------------------------------------- A5

def quadratic_cost(R, noise, z, mu):
    resid = z - R.T @ mu
    return (resid.T @ resid).item() / (2.0 * noise) + (mu.T @ mu).item() / 2.0


def test_a5_addressing_solves_the_regularized_least_squares_exactly(verdict):
    rng = np.random.default_rng(55)
    worst = 0.0
    for K in range(1, 7):
        C = int(rng.integers(1, 5))
        R = rng.standard_normal((K, C))
        noise = float(rng.uniform(0.3, 2.0))
        mem = MemoryState(R=R, U=np.eye(K), sigma_xi_sq=noise)
        z = rng.standard_normal((C, 1))
        mu = address(mem, z)
        explicit = np.linalg.inv(R @ R.T + noise * np.eye(K)) @ R @ z
        worst = max(worst, np.max(np.abs(mu - explicit)))

    K, C, noise = 6, 4, 0.9
    R = rng.standard_normal((K, C))
    mem = MemoryState(R=R, U=np.eye(K), sigma_xi_sq=noise)
    z = rng.standard_normal((C, 1))
    mu = address(mem, z)
    base = quadratic_cost(R, noise, z, mu)
    improved = 0
    for _ in range(100):
        u = rng.standard_normal((K, 1))
        u /= np.linalg.norm(u)
        if quadratic_cost(R, noise, z, mu + 1e-3 * u) < base:
            improved += 1

    ok = worst <= 1e-9 and improved == 0
    verdict("A5 addressing optimality", ok,
            f"max |solve-inverse|={worst:.2e}<=1e-9, "
            f"{improved}/100 perturbations improved")
    assert ok


# --------------------------------------------------------------------- A6

def test_a6_attractor_denoising_cleans_corrupted_stored_patterns(desk_model, verdict):
    start = time.perf_counter()
    rows, summaries, _ = run_denoise(desk_model["params"], desk_model["stored"],
                                     NoiseSpec("salt_pepper", 0.15),
                                     trials=50, max_iters=15, seed=2026)
    sweep_seconds = time.perf_counter() - start
    total_seconds = desk_model["train_seconds"] + sweep_seconds

    ratios = [s.final_hamming / max(1, s.initial_hamming) for s in summaries]
    median_ratio = float(np.median(ratios))
    improved = float(np.mean([s.final_energy <= s.initial_energy
                              for s in summaries]))
    by_trial = {}
    for r in rows:
        by_trial.setdefault(r["trial"], []).append(r["energy"])
    steps_ok = total = 0
    for es in by_trial.values():
        for i in range(len(es) - 1):
            total += 1
            steps_ok += (es[i + 1] <= es[i] + 1e-9)
    noninc = steps_ok / total

    ok = (median_ratio <= 0.30 and improved >= 0.95 and noninc >= 0.90
          and total_seconds < 1200.0)
    verdict("A6 attractor denoising", ok,
            f"median_ratio={median_ratio:.3f}<=0.30, "
            f"energy_improved={improved:.2f}>=0.95, "
            f"nonincreasing_steps={noninc:.3f}>=0.90, "
            f"{total_seconds / 60:.1f}min<20min")
    assert median_ratio <= 0.30
    assert improved >= 0.95
    assert noninc >= 0.90
    assert total_seconds < 1200.0


# --------------------------------------------------------------------- A7

def test_a7_prior_samples_clean_up_onto_stored_patterns(desk_model, verdict):
    dim = desk_model["corpus"].dim
    _, summaries = run_sample(desk_model["params"], desk_model["mem"],
                              desk_model["stored"], n_samples=20,
                              max_iters=60, seed=303)
    energy_ok = all(s.final_energy <= s.initial_energy for s in summaries)
    near = float(np.mean([s.final_hamming <= 0.05 * dim for s in summaries]))
    ok = energy_ok and near >= 0.5
    verdict("A7 prior sampling cleanup", ok,
            f"all_energies_improved={energy_ok}, "
            f"frac_within_5pct_of_stored={near:.2f}>=0.50")
    assert energy_ok
    assert near >= 0.5


# --------------------------------------------------------------------- A8

def test_a8_retrieval_error_stays_flat_as_episodes_grow(desk_model, verdict):
    rows = run_capacity(desk_model["params"], desk_model["corpus"],
                        [16, 64], [2], trials=10, seed=404)
    err16 = rows[0]["mean_error"]
    err64 = rows[1]["mean_error"]
    ok = err16 > 0 and err64 <= 1.5 * err16
    verdict("A8 capacity trend", ok,
            f"err(T=16)={err16:.3f}, err(T=64)={err64:.3f}, "
            f"ratio={err64 / err16:.3f}<=1.5")
    assert err16 > 0
    assert err64 <= 1.5 * err16


# --------------------------------------------------------------------- A9

def test_a9_one_refinement_pass_never_loosens_the_write_bound(desk_model, verdict):
    params = desk_model["params"]
    corpus = desk_model["corpus"]
    rng = PortableRng(505)
    violations = 0
    min_delta = math.inf
    for _ in range(100):
        idx = rng.choice_no_replace(len(corpus), 2)
        ep = Episode(corpus.patterns[idx])
        mem0 = prior_state(params)
        bt = {}
        for r in (0, 1):
            wr = write_episode(params, mem0, ep, refine_iters=r)
            reads = read_episode(params, wr.memory, ep, sample=False)
            bt[r] = bounds(params, mem0, wr, reads, ep, compute_bt=True).bound_BT
        delta = bt[1] - bt[0]
        min_delta = min(min_delta, delta)
        violations += (delta < -1e-9)
    ok = violations == 0
    verdict("A9 refinement tightening", ok,
            f"violations={violations}/100, min_delta={min_delta:.3e}>=-1e-9")
    assert ok


# -------------------------------------------------------------------- A10

def test_a10_persistence_round_trip_and_byte_identical_reruns(desk_model, tmp_path, verdict):
    params, mem = desk_model["params"], desk_model["mem"]
    path = tmp_path / "trained.dkm"
    save_model(path, params, mem)
    back, bmem = load_model(path)
    arrays_equal = all(np.array_equal(a, b) for (_, a), (_, b)
                       in zip(sorted(param_arrays(params).items()),
                              sorted(param_arrays(back).items())))
    mem_equal = (np.array_equal(mem.R, bmem.R) and np.array_equal(mem.U, bmem.U)
                 and mem.sigma_xi_sq == bmem.sigma_xi_sq)

    # Every CSV-emitting experiment command, rerun against the same outputs.
    corpus = tmp_path / "c.corpus"
    model = tmp_path / "m.dkm"
    stored = tmp_path / "mem.dkm"
    assert cli_main(["gen", "--out", str(corpus), "--n-classes", "4",
                     "--per-class", "3", "--dim", "16", "--flip-prob", "0.1",
                     "--seed", "9"]) == 0
    train = ["train", "--corpus", str(corpus), "--out", str(model),
             "--csv", str(tmp_path / "train.csv"), "--K", "6", "--C", "6",
             "--T", "3", "--hidden", "8", "--batch-episodes", "2",
             "--train-steps", "3", "--learning-rate", "1e-3", "--seed", "1"]
    runs = {
        "train.csv": train,
        "q.csv": ["query", "--model", str(stored), "--corpus", str(corpus),
                  "--index", "2", "--noise-spec", "salt_pepper:0.2",
                  "--max-iters", "6", "--seed", "3", "--out",
                  str(tmp_path / "q.csv")],
        "dn.csv": ["denoise", "--model", str(model), "--corpus", str(corpus),
                   "--T", "4", "--trials", "5", "--noise-spec",
                   "salt_pepper:0.15", "--max-iters", "5", "--seed", "4",
                   "--out", str(tmp_path / "dn.csv")],
        "sp.csv": ["sample", "--model", str(model), "--corpus", str(corpus),
                   "--T", "4", "--n", "4", "--max-iters", "5", "--seed", "5",
                   "--out", str(tmp_path / "sp.csv")],
        "cap.csv": ["capacity", "--model", str(model), "--corpus", str(corpus),
                    "--lengths", "3,6", "--classes", "2", "--trials", "3",
                    "--seed", "6", "--out", str(tmp_path / "cap.csv")],
        "gc.csv": ["gradcheck", "--D", "4", "--C", "2", "--K", "3", "--T", "2",
                   "--seed", "0", "--out", str(tmp_path / "gc.csv")],
    }

    def run_all():
        assert cli_main(train) == 0
        assert cli_main(["write", "--model", str(model), "--corpus",
                         str(corpus), "--out", str(stored), "--T", "4"]) == 0
        out = {}
        for name, argv in runs.items():
            assert cli_main(argv) == 0
            out[name] = (tmp_path / name).read_bytes()
        out["model"] = model.read_bytes()
        out["stored"] = stored.read_bytes()
        return out

    first = run_all()
    second = run_all()
    reruns_identical = first == second

    ok = arrays_equal and mem_equal and reruns_identical
    verdict("A10 persistence and determinism", ok,
            f"round_trip_bit_exact={arrays_equal and mem_equal}, "
            f"{len(runs)} experiment CSVs rerun byte-identical="
            f"{reruns_identical}")
    assert arrays_equal and mem_equal
    assert reruns_identical
