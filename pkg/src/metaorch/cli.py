"""Command-line entry point for experiments and the review service.

Every command resolves one RunConfig (defaults, then --config file, then
flags), writes the resolved snapshot as resolved_config.cfg next to its
outputs, and exits 0 on success or 1 with a one-line `error: ...` on stderr.
Re-running any command from its snapshot reproduces its outputs byte for
byte.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import evalreport, fuzzy, neuralnet, training
from .envsim import Environment
from .orchestrator import (
    NeuralStrategy,
    RandomStrategy,
    RoundRobinStrategy,
    calibrate_static_best,
)
from .runconfig import (
    ConfigFileError,
    RunConfig,
    parse_config_text,
    read_config,
    resolve,
    write_config,
)

SMOKE_OVERRIDES = {
    "grid_hidden_dims": ((64, 32), (128, 64)),
    "grid_dropout": (0.0,),
    "grid_learning_rate": (0.001, 0.01),
    "grid_batch_size": (64,),
    "grid_confidence_weight": (0.1, 0.2, 0.0),
}

STRATEGY_NAMES = ("neural", "random", "round-robin", "static-best")


def _load_config(args, extra_overrides: dict | None = None) -> RunConfig:
    file_overrides = read_config(args.config) if args.config else None
    cli_overrides = {
        "master_seed": getattr(args, "seed", None),
        "iterations": getattr(args, "iterations", None),
        "batch_size": getattr(args, "batch_size", None),
        "learning_rate": getattr(args, "lr", None),
        "confidence_weight": getattr(args, "confidence_weight", None),
        "train_seed": getattr(args, "train_seed", None),
        "n_tasks": getattr(args, "n_tasks", None),
        "out_dir": getattr(args, "out_dir", None),
        "checkpoint": getattr(args, "checkpoint", None),
        "address": getattr(args, "address", None),
    }
    if extra_overrides:
        cli_overrides.update(extra_overrides)
    return resolve(file_overrides, cli_overrides)


def _prepare_out_dir(config: RunConfig) -> str:
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".write_probe")
    with open(probe, "w", encoding="utf-8") as f:
        f.write("ok")
    os.remove(probe)
    write_config(config, os.path.join(out_dir, "resolved_config.cfg"))
    return out_dir


def _checkpoint_path(config: RunConfig) -> str:
    return config.checkpoint or os.path.join(config.out_dir, "checkpoint.npz")


def cmd_train(args) -> int:
    config = _load_config(args)
    out_dir = _prepare_out_dir(config)
    env = Environment(config.env_config())
    params = neuralnet.init_parameters(config.network_config(), seed=config.init_seed)
    params, records = training.train(
        env, params, config.train_config(), config.fuzzy_weights()
    )
    ckpt = _checkpoint_path(config)
    neuralnet.save(params, ckpt)
    records_path = os.path.join(out_dir, "training_records.csv")
    training.write_records_csv(records, records_path)
    if records:
        span = f"ce {records[0].cross_entropy_loss:.4f} -> {records[-1].cross_entropy_loss:.4f}"
    else:
        span = "no iterations"
    print(f"train: wrote {ckpt} and {records_path} ({span})")
    return 0


def _build_strategies(names, config: RunConfig, env: Environment):
    weights = config.fuzzy_weights()
    strategies = []
    for name in names:
        if name == "neural":
            ckpt = _checkpoint_path(config)
            if not os.path.exists(ckpt):
                raise FileNotFoundError(
                    f"neural strategy requires a checkpoint; not found at {ckpt}"
                )
            strategies.append(NeuralStrategy(neuralnet.load(ckpt)))
        elif name == "random":
            strategies.append(RandomStrategy(env.n_agents, config.random_seed))
        elif name == "round-robin":
            strategies.append(RoundRobinStrategy(env.n_agents))
        elif name == "static-best":
            strategies.append(
                calibrate_static_best(
                    env,
                    seed=config.warmup_seed,
                    n_warmup=config.static_warmup_tasks,
                    weights=weights,
                )
            )
        else:
            raise ValueError(
                f"unknown strategy {name!r}; expected one of {', '.join(STRATEGY_NAMES)}"
            )
    return strategies


def _slug(name: str) -> str:
    return name.lower().replace(" ", "-")


def cmd_evaluate(args) -> int:
    extra = {}
    if args.strategy:
        names = (
            STRATEGY_NAMES if args.strategy == "all" else tuple(args.strategy.split(","))
        )
        extra["strategies"] = names
    config = _load_config(args, extra)
    out_dir = _prepare_out_dir(config)
    env = Environment(config.env_config())
    weights = config.fuzzy_weights()
    strategies = _build_strategies(config.strategies, config, env)
    warmup = evalreport.warmup_histories(
        env, config.warmup_tasks, seed=config.warmup_seed, weights=weights
    )
    if len(strategies) == 1:
        from .orchestrator import copy_histories

        reports = [
            evalreport.evaluate(
                strategies[0],
                env,
                config.n_tasks,
                config.eval_seed,
                weights,
                histories=copy_histories(warmup),
            )
        ]
    else:
        reports = evalreport.compare(
            strategies, env, config.n_tasks, config.eval_seed, weights, warmup=warmup
        )
    for report in reports:
        slug = _slug(report.strategy)
        with open(os.path.join(out_dir, f"report_{slug}.json"), "w", encoding="utf-8") as f:
            f.write(report.to_json())
        with open(os.path.join(out_dir, f"confusion_{slug}.csv"), "w", encoding="utf-8") as f:
            f.write(evalreport.render_confusion(report))
    if len(reports) > 1:
        with open(os.path.join(out_dir, "comparison.csv"), "w", encoding="utf-8") as f:
            f.write(evalreport.comparison_csv(reports))
    summary = "; ".join(
        f"{r.strategy} acc={r.selection_accuracy:.3f} q={r.average_quality:.3f}"
        for r in reports
    )
    print(f"evaluate: {summary}")
    return 0


def _space_overrides(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        overrides = parse_config_text(f.read())
    if not overrides:
        raise ConfigFileError(f"space file {path} sets no grid keys")
    bad = [k for k in overrides if not k.startswith("grid_")]
    if bad:
        raise ConfigFileError(f"space file may only set grid_* keys, got {bad}")
    return overrides


def cmd_gridsearch(args) -> int:
    extra = {}
    if args.space:
        extra.update(_space_overrides(args.space))
    if args.smoke:
        extra.update(SMOKE_OVERRIDES)
    config = _load_config(args, extra)
    out_dir = _prepare_out_dir(config)
    env = Environment(config.env_config())
    results = training.grid_search(
        env,
        config.grid_space(),
        n_val_tasks=config.val_tasks,
        val_seed=config.val_seed,
        base_config=config.train_config(),
        jobs=args.jobs,
    )
    path = os.path.join(out_dir, "grid_results.csv")
    training.write_grid_csv(results, path)
    best = results[0]
    print(
        f"gridsearch: {len(results)} combinations, best acc={best.accuracy:.3f} "
        f"hidden={'x'.join(str(h) for h in best.hidden_dims)} lr={best.learning_rate} "
        f"-> {path}"
    )
    return 0


def _parse_weight_grid(text: str) -> list[fuzzy.FuzzyWeights]:
    triples = []
    rejected = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        values = [float(x) for x in part.split(",")]
        if len(values) != 3:
            rejected.append(f"{part!r}: need exactly 3 weights")
            continue
        w = fuzzy.FuzzyWeights(*values)
        try:
            w.validate()
        except ValueError as exc:
            rejected.append(f"{part!r}: {exc}")
            continue
        triples.append(w)
    for note in rejected:
        print(f"sensitivity: rejected weight row {note}", file=sys.stderr)
    if not triples:
        raise ValueError("no valid weight triples given")
    return triples


DEFAULT_WEIGHT_GRID = "0.4,0.4,0.2;0.5,0.3,0.2;0.3,0.5,0.2;0.4,0.3,0.3"


def cmd_sensitivity(args) -> int:
    config = _load_config(args)
    out_dir = _prepare_out_dir(config)
    env = Environment(config.env_config())
    ckpt = _checkpoint_path(config)
    if not os.path.exists(ckpt):
        raise FileNotFoundError(f"sensitivity needs a trained checkpoint; not found at {ckpt}")
    params = neuralnet.load(ckpt)
    grid = _parse_weight_grid(args.weights)

    def eval_run(weights: fuzzy.FuzzyWeights) -> float:
        histories = evalreport.warmup_histories(
            env, config.warmup_tasks, seed=config.warmup_seed, weights=weights
        )
        report = evalreport.evaluate(
            NeuralStrategy(params),
            env,
            config.n_tasks,
            config.eval_seed,
            weights,
            histories=histories,
        )
        return report.selection_accuracy

    rows = fuzzy.sensitivity_sweep(grid, eval_run)
    path = os.path.join(out_dir, "sensitivity.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("w_completeness,w_relevance,w_confidence,accuracy,delta_vs_default\n")
        for w, acc, delta in rows:
            f.write(f"{w.w_c!r},{w.w_r!r},{w.w_f!r},{acc!r},{delta!r}\n")
    spread = max(acc for _, acc, _ in rows) - min(acc for _, acc, _ in rows)
    print(f"sensitivity: {len(rows)} weightings, accuracy spread {spread:.4f} -> {path}")
    return 0


def cmd_serve(args) -> int:
    config = _load_config(args)
    out_dir = _prepare_out_dir(config)
    ckpt = _checkpoint_path(config)
    if not os.path.exists(ckpt):
        raise FileNotFoundError(f"serve needs a trained checkpoint; not found at {ckpt}")
    from .hitl import HitlServer, create_app

    env = Environment(config.env_config())
    params = neuralnet.load(ckpt)
    server = HitlServer(
        env,
        params,
        weights=config.fuzzy_weights(),
        serve_seed=config.serve_seed,
        queue_cap=config.queue_cap,
        auto_expire_seconds=config.auto_expire_seconds,
        feedback_path=os.path.join(out_dir, "feedback.jsonl"),
    )
    static_dir = args.static_dir if args.static_dir and os.path.isdir(args.static_dir) else None
    app = create_app(server, static_dir=static_dir)
    host, _, port_text = config.address.partition(":")
    port = int(port_text) if port_text else 8000

    import uvicorn

    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=port, log_level="warning")
    finally:
        # whatever was reviewed this session stays on disk for injection
        server.flush()
    return 0


def cmd_roster(args) -> int:
    config = _load_config(args)
    env = Environment(config.env_config())
    print(env.roster_json())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metaorch",
        description="Neural orchestration experiments over a simulated multi-agent environment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, out_dir: bool = True) -> None:
        p.add_argument("--config", help="config file of key = value lines")
        p.add_argument("--seed", type=int, help="environment master seed")
        if out_dir:
            p.add_argument("--out-dir", help="output directory (default: runs)")

    p = sub.add_parser("train", help="train the selector and write a checkpoint")
    common(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--confidence-weight", type=float)
    p.add_argument("--train-seed", type=int)
    p.add_argument("--checkpoint", help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run strategies over an evaluation stream")
    common(p)
    p.add_argument("--checkpoint", help="trained model checkpoint")
    p.add_argument("--strategy", help="'all' or comma list of " + ", ".join(STRATEGY_NAMES))
    p.add_argument("--n-tasks", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gridsearch", help="rank hyperparameter combinations")
    common(p)
    p.add_argument("--space", help="file of grid_* keys overriding the search space")
    p.add_argument("--smoke", action="store_true", help="reduced 12-combination space")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("sensitivity", help="selection accuracy across fuzzy weightings")
    common(p)
    p.add_argument("--checkpoint", help="trained model checkpoint")
    p.add_argument(
        "--weights",
        default=DEFAULT_WEIGHT_GRID,
        help="semicolon-separated comma triples, e.g. '0.5,0.3,0.2;0.4,0.4,0.2'",
    )
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("serve", help="run the human review HTTP service")
    common(p)
    p.add_argument("--checkpoint", help="trained model checkpoint")
    p.add_argument("--address", help="host:port to bind (default 127.0.0.1:8000)")
    p.add_argument("--static-dir", help="directory with the dashboard bundle")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("roster", help="print the agent roster as JSON")
    common(p, out_dir=False)
    p.set_defaults(func=cmd_roster)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one line, machine-parsable, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
