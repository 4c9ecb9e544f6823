"""Command-line front end.

Subcommands: gen, train, write, query, denoise, sample, capacity, gradcheck.
Flags mirror RunConfig field names (underscores become dashes). Every run
writes a JSON config echo next to its primary output, and all stochastic work
derives from --seed, so reruns produce byte-identical outputs.

Exit codes: 0 success, 2 usage error, 3 data-format error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import asdict

import numpy as np

from .attractor import iterate
from .data import (Corpus, generate_synthetic, inject_noise, load_corpus,
                   parse_noise_spec, save_corpus)
from .episodic import Episode, prior_state, write_episode
from .errors import (DimensionError, DomainError, FormatError, NumericalError)
from .experiments import (CAPACITY_CSV_COLUMNS, GRADCHECK_CSV_COLUMNS,
                          TRACE_CSV_COLUMNS, TRAIN_CSV_COLUMNS, RunConfig,
                          init_from_config, run_capacity, run_denoise,
                          run_gradcheck, run_sample, train_loop, trace_rows,
                          write_config_echo, write_csv)
from .persist import load_model, save_model
from .rng import PortableRng

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_NUMERICAL = 4


def _add_run_config_flags(p: argparse.ArgumentParser) -> None:
    cfg = RunConfig()
    p.add_argument("--K", type=int, default=cfg.K, help="memory rows")
    p.add_argument("--C", type=int, default=cfg.C, help="embedding width")
    p.add_argument("--T", type=int, default=cfg.T, help="episode length")
    p.add_argument("--seed", type=int, default=cfg.seed)
    p.add_argument("--learning-rate", type=float, default=cfg.learning_rate)
    p.add_argument("--train-steps", type=int, default=cfg.train_steps)
    p.add_argument("--batch-episodes", type=int, default=cfg.batch_episodes)
    p.add_argument("--refine-iters", type=int, default=cfg.refine_iters)
    p.add_argument("--likelihood", choices=("bernoulli", "gaussian"),
                   default=cfg.likelihood)
    p.add_argument("--sigma-xi-sq", type=float, default=cfg.sigma_xi_sq)
    p.add_argument("--sigma-out-sq", type=float, default=cfg.sigma_out_sq)
    p.add_argument("--noise-spec", default=cfg.noise_spec,
                   help="salt_pepper:<p>, gaussian:<sigma>, or none")
    p.add_argument("--hidden", type=int, default=cfg.hidden)
    p.add_argument("--objective", choices=("lt", "bt"), default=cfg.objective)


def _config_from_args(args) -> RunConfig:
    return RunConfig(K=args.K, C=args.C, T=args.T, seed=args.seed,
                     learning_rate=args.learning_rate, train_steps=args.train_steps,
                     batch_episodes=args.batch_episodes, refine_iters=args.refine_iters,
                     likelihood=args.likelihood, sigma_xi_sq=args.sigma_xi_sq,
                     sigma_out_sq=args.sigma_out_sq, noise_spec=args.noise_spec,
                     hidden=args.hidden, objective=args.objective)


def _echo(args, primary_out: str, extra: dict | None = None) -> None:
    payload = {k: v for k, v in vars(args).items() if k != "func"}
    if extra:
        payload.update(extra)
    write_config_echo(str(primary_out) + ".config.json", payload)


def _load_written(args, use_T: bool = True):
    """Shared plumbing for commands that write an episode into memory:
    loads model + corpus, picks the episode patterns."""
    params, _ = load_model(args.model)
    corpus = load_corpus(args.corpus)
    if corpus.dim != params.dim_in:
        raise FormatError(f"corpus width {corpus.dim} != model input {params.dim_in}")
    if not use_T:
        return params, corpus, corpus.patterns[:0]
    if args.T > len(corpus):
        raise FormatError(f"--T {args.T} exceeds corpus size {len(corpus)}")
    return params, corpus, corpus.patterns[:args.T]


def cmd_gen(args) -> int:
    corpus = generate_synthetic(args.n_classes, args.per_class, args.dim,
                                args.flip_prob, args.seed)
    save_corpus(args.out, corpus)
    _echo(args, args.out, {"patterns": len(corpus), "dim": corpus.dim})
    print(f"wrote {len(corpus)} patterns ({corpus.dim} wide, "
          f"{args.n_classes} classes) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    corpus = load_corpus(args.corpus)
    params = init_from_config(corpus.dim, cfg)
    every = max(1, cfg.train_steps // 10)

    def progress(row):
        if row["step"] % every == 0 or row["step"] == cfg.train_steps - 1:
            print(f"step {row['step']:6d}  objective {row['objective']:.4f}  "
                  f"elbo {row['elbo_LT']:.4f}  ae {row['L_AE']:.4f}")

    params, rows = train_loop(params, corpus, cfg, progress=progress)
    save_model(args.out, params)
    if args.csv:
        write_csv(args.csv, TRAIN_CSV_COLUMNS, rows)
    _echo(args, args.out, {"config": asdict(cfg)})
    print(f"saved model to {args.out}")
    return EXIT_OK


def cmd_write(args) -> int:
    params, corpus, patterns = _load_written(args, use_T=not args.indices)
    if args.indices:
        idx = [int(s) for s in args.indices.split(",")]
        for i in idx:
            if not (0 <= i < len(corpus)):
                raise FormatError(f"pattern index {i} out of range")
        patterns = corpus.patterns[idx]
    mem = write_episode(params, prior_state(params), Episode(patterns),
                        refine_iters=args.refine_iters).memory
    save_model(args.out, params, mem)
    _echo(args, args.out, {"written": len(patterns)})
    print(f"wrote {len(patterns)} patterns into memory; saved {args.out}")
    return EXIT_OK


def cmd_query(args) -> int:
    params, mem = load_model(args.model)
    if mem is None:
        raise FormatError(f"{args.model}: no memory state stored; run write first")
    corpus = load_corpus(args.corpus)
    if not (0 <= args.index < len(corpus)):
        raise FormatError(f"--index {args.index} out of range for corpus")
    reference = corpus.patterns[args.index]
    noise = parse_noise_spec(args.noise_spec)
    x0 = inject_noise(reference, noise, PortableRng(args.seed))
    trace = iterate(params, mem, x0, args.max_iters)
    rows = trace_rows(0, trace, reference)
    write_csv(args.out, TRACE_CSV_COLUMNS, rows)
    _echo(args, args.out)
    final = rows[-1]
    print(f"query {args.index}: {len(rows) - 1} iterations, "
          f"energy {rows[0]['energy']:.4f} -> {final['energy']:.4f}, "
          f"hamming {rows[0]['hamming_to_reference']} -> "
          f"{final['hamming_to_reference']}, converged={trace.converged}")
    return EXIT_OK


def cmd_denoise(args) -> int:
    params, _, patterns = _load_written(args)
    noise = parse_noise_spec(args.noise_spec)
    if noise.kind == "none":
        noise = parse_noise_spec("salt_pepper:0.15")
    rows, summaries, _ = run_denoise(params, patterns, noise, args.trials,
                                     args.max_iters, args.seed)
    write_csv(args.out, TRACE_CSV_COLUMNS, rows)
    _echo(args, args.out)
    ratios = [s.final_hamming / max(1, s.initial_hamming) for s in summaries]
    improved = sum(1 for s in summaries if s.final_energy <= s.initial_energy)
    print(f"denoise: {len(summaries)} trials, median final/initial hamming "
          f"{np.median(ratios):.3f}, energy improved in {improved}/{len(summaries)}")
    return EXIT_OK


def cmd_sample(args) -> int:
    params, corpus, patterns = _load_written(args)
    mem = write_episode(params, prior_state(params), Episode(patterns)).memory
    rows, summaries = run_sample(params, mem, patterns, args.n, args.max_iters,
                                 args.seed)
    write_csv(args.out, TRACE_CSV_COLUMNS, rows)
    _echo(args, args.out)
    frac = np.mean([s.final_hamming / corpus.dim for s in summaries])
    print(f"sample: {len(summaries)} draws, mean final nearest-stored hamming "
          f"{frac:.3f} of D, all energies improved="
          f"{all(s.final_energy <= s.initial_energy for s in summaries)}")
    return EXIT_OK


def cmd_capacity(args) -> int:
    params, _ = load_model(args.model)
    corpus = load_corpus(args.corpus)
    if corpus.dim != params.dim_in:
        raise FormatError(f"corpus width {corpus.dim} != model input {params.dim_in}")
    lengths = [int(s) for s in args.lengths.split(",")]
    classes = [int(s) for s in args.classes.split(",")]
    rows = run_capacity(params, corpus, lengths, classes, args.trials, args.seed)
    write_csv(args.out, CAPACITY_CSV_COLUMNS, rows)
    _echo(args, args.out)
    for row in rows:
        print(f"length {row['length']:4d}  classes {row['n_classes']:2d}  "
              f"mean error {row['mean_error']:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rows, max_rel, passed = run_gradcheck(
        dim_in=args.D, code_size=args.C, mem_rows=args.K, episode_len=args.T,
        seed=args.seed, likelihood=args.likelihood, h=args.h,
        refine_iters=args.refine_iters, objective=args.objective)
    if args.out:
        write_csv(args.out, GRADCHECK_CSV_COLUMNS, rows)
        _echo(args, args.out)
    print(f"gradcheck: {len(rows)} coordinates, max relative error {max_rel:.3e}, "
          f"{'PASS' if passed else 'FAIL'}")
    if not passed:
        raise NumericalError(f"gradient check failed (max rel err {max_rel:.3e})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attractor-memory",
        description="Generative distributed memory: train, store, retrieve.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic binary corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-classes", type=int, default=16)
    p.add_argument("--per-class", type=int, default=4)
    p.add_argument("--dim", type=int, default=144)
    p.add_argument("--flip-prob", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--csv", default=None, help="training metrics CSV")
    _add_run_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("write", help="store corpus patterns into memory")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="model+memory file to write")
    p.add_argument("--T", type=int, default=8, help="store the first T patterns")
    p.add_argument("--indices", default=None, help="explicit comma-separated indices")
    p.add_argument("--refine-iters", type=int, default=0)
    p.set_defaults(func=cmd_write)

    p = sub.add_parser("query", help="retrieve one (optionally corrupted) pattern")
    p.add_argument("--model", required=True, help="model file with memory")
    p.add_argument("--corpus", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--noise-spec", default="none")
    p.add_argument("--max-iters", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="trace CSV")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("denoise", help="corruption/cleanup sweep over trials")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--T", type=int, default=8, help="store the first T patterns")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--noise-spec", default="salt_pepper:0.15")
    p.add_argument("--max-iters", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="trace CSV")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("sample", help="clean up prior samples with the attractor")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--T", type=int, default=8, help="store the first T patterns")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--max-iters", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="trace CSV")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("capacity", help="retrieval error vs episode length sweep")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--lengths", default="16,64", help="comma-separated episode lengths")
    p.add_argument("--classes", default="2", help="comma-separated class counts")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="capacity CSV")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--D", type=int, default=6)
    p.add_argument("--C", type=int, default=3)
    p.add_argument("--K", type=int, default=4)
    p.add_argument("--T", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--likelihood", choices=("bernoulli", "gaussian"),
                   default="bernoulli")
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--refine-iters", type=int, default=0)
    p.add_argument("--objective", choices=("lt", "bt"), default="lt")
    p.add_argument("--out", default=None, help="per-coordinate CSV")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FormatError, DimensionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NumericalError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
