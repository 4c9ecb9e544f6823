"""Shared plumbing for demos 04-06: the corpus they all use, and the trained
model demo 03 saves. If the saved model file is missing, an identical one is
trained on the spot (about half a minute on one core)."""

from pathlib import Path

from attractor_memory import (RunConfig, generate_synthetic, init_params,
                              load_model, save_model, train_loop)

MODEL_PATH = Path(__file__).resolve().parent / "trained_demo_model.dkm"


def demo_corpus():
    """8 prototype patterns of 36 bits, 4 exact copies each."""
    return generate_synthetic(n_classes=8, per_class=4, dim=36,
                              flip_prob=0.0, seed=101)


def trained_model():
    """Returns (params, corpus); loads demo 03's model or retrains it."""
    corpus = demo_corpus()
    if MODEL_PATH.exists():
        params, _ = load_model(MODEL_PATH)
        print(f"[setup] loaded trained model from {MODEL_PATH.name}")
        return params, corpus

    print("[setup] no saved model; training one (about 30 s)...")
    cfg = RunConfig(K=8, C=8, T=4, seed=7, learning_rate=1e-3,
                    train_steps=2000, hidden=48)
    params = init_params(dim_in=corpus.dim, code_size=cfg.C, mem_rows=cfg.K,
                         hidden=(cfg.hidden,), likelihood=cfg.likelihood,
                         seed=cfg.seed, sigma_xi_sq=cfg.sigma_xi_sq,
                         sigma_out_sq=cfg.sigma_out_sq, sigma_U_sq=16.0)
    params, _ = train_loop(params, corpus, cfg)
    save_model(MODEL_PATH, params)
    print(f"[setup] saved to {MODEL_PATH.name} for the other demos")
    return params, corpus
