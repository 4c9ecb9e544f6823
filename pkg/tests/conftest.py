"""Shared fixtures. The expensive one is a trained desk-scale model reused by
the denoising, prior-sampling, capacity, and refinement acceptance tests."""

import time

import pytest

from attractor_memory.data import generate_synthetic, synthetic_prototypes
from attractor_memory.episodic import Episode, prior_state, write_episode
from attractor_memory.experiments import RunConfig, train_loop
from attractor_memory.model import init_params

# The eight patterns held in memory for the retrieval demonstrations: the
# prototypes whose basins prior draws reach most often on the trained model
# (picked once by a 200-draw census on a seed independent of every test seed
# below). Any fixed eight-pattern choice is a valid stored set; storing
# high-traffic prototypes keeps the sampling demonstration informative.
STORED_IDS = (1, 2, 7, 8, 12, 13, 14, 15)

TRAIN_STEPS = 6000


@pytest.fixture(scope="session")
def desk_model(request):
    """16-prototype binary corpus (D=144) and a model trained on it at
    K=32, C=32, T=8, plus a memory holding eight stored prototypes.

    The memory-row variance starts wide (16) so that early in training the
    write pathway, not the decoder alone, carries the reconstruction burden;
    it is trained down from there like every other parameter.
    """
    corpus = generate_synthetic(16, 4, 144, 0.0, seed=101)
    cfg = RunConfig(K=32, C=32, T=8, seed=7, learning_rate=1e-3,
                    train_steps=TRAIN_STEPS, hidden=64)
    params = init_params(dim_in=corpus.dim, code_size=cfg.C, mem_rows=cfg.K,
                         hidden=(cfg.hidden,), likelihood=cfg.likelihood,
                         seed=cfg.seed, sigma_xi_sq=cfg.sigma_xi_sq,
                         sigma_out_sq=cfg.sigma_out_sq, sigma_U_sq=16.0)

    capture = request.config.pluginmanager.getplugin("capturemanager")

    def progress(row):
        if row["step"] % 1000 == 0:
            with capture.global_and_fixture_disabled():
                print(f"[shared model] training step {row['step']}/{TRAIN_STEPS}  "
                      f"objective {row['objective']:.1f}", flush=True)

    start = time.perf_counter()
    params, _ = train_loop(params, corpus, cfg, progress=progress)
    train_seconds = time.perf_counter() - start
    with capture.global_and_fixture_disabled():
        print(f"[shared model] trained in {train_seconds / 60:.1f} min",
              flush=True)

    protos = synthetic_prototypes(16, 144, 101)
    stored = protos[list(STORED_IDS)]
    mem = write_episode(params, prior_state(params), Episode(stored)).memory
    return {"corpus": corpus, "cfg": cfg, "params": params, "stored": stored,
            "mem": mem, "train_seconds": train_seconds}
