"""Binding acceptance gate.

Each test checks one release criterion end to end, with its tolerance and
runtime budget pinned, and records one PASS/FAIL verdict line that is echoed
after the run. The expensive shared work (the default training run) comes
from session fixtures; everything here asserts on the real pipeline, never
on stand-ins.
"""

from __future__ import annotations

import json
import threading
import time

import numpy as np
import pytest
from conftest import TIMINGS, record_acceptance
from fastapi.testclient import TestClient

from metaorch import neuralnet
from metaorch.cli import main
from metaorch.envsim import EnvConfig, Environment, domain_for
from metaorch.evalreport import compare, evaluate, warmup_histories
from metaorch.feedback import read_log, regenerate_task
from metaorch.fuzzy import (
    FuzzyWeights,
    completeness,
    confidence,
    relevance,
    sensitivity_sweep,
)
from metaorch.hitl import HitlServer, create_app
from metaorch.orchestrator import (
    NeuralStrategy,
    RandomStrategy,
    RoundRobinStrategy,
    calibrate_static_best,
    encode_input,
    fresh_histories,
)
from metaorch.training import (
    SMOKE_GRID,
    GridSpace,
    TrainConfig,
    grid_search,
    inject_feedback,
    oracle_label,
    write_grid_csv,
)

# Reports produced by the strategy-comparison criterion, reused by the
# confusion-identity criterion when available.
_SHARED: dict = {}


def _verdict(name: str, ok: bool, detail: str) -> None:
    record_acceptance(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")


def test_criterion_01_fuzzy_equation_exactness():
    started = time.perf_counter()
    boundary_err = max(
        abs(completeness(-3.0) - 0.0),
        abs(completeness(1.0) - 1.0),
        abs(completeness(-7.0) - 0.0),
        abs(completeness(9.0) - 1.0),
        abs(relevance(-2.0) - 0.0),
        abs(relevance(1.0) - 1.0),
        abs(relevance(-6.0) - 0.0),
        abs(relevance(4.0) - 1.0),
        abs(confidence(0.0, 0.0) - 0.1),
        abs(confidence(1.0, 0.0) - 1.0),
        abs(confidence(1.0, 8.0) - 1.0),
        abs(confidence(0.3, -9.0) - 0.1),
    )
    rng = np.random.default_rng(1)
    random_err = 0.0
    for _ in range(1000):
        s = float(rng.uniform(-8, 8))
        r = float(rng.uniform(0, 1))
        n = float(rng.uniform(-3, 3))
        random_err = max(
            random_err,
            abs(completeness(s) - min(1.0, max(0.0, (s + 3) / 4))),
            abs(relevance(s) - min(1.0, max(0.0, (s + 2) / 3))),
            abs(confidence(r, n) - min(1.0, max(0.1, r + n / 5))),
        )
    elapsed = time.perf_counter() - started
    worst = max(boundary_err, random_err)
    ok = worst <= 1e-12 and elapsed < 1.0
    _verdict(
        "criterion 1, fuzzy equation exactness",
        ok,
        f"max abs error {worst:.2e} <= 1e-12, {elapsed:.2f}s < 1s",
    )
    assert ok


def test_criterion_02_gradient_checks():
    started = time.perf_counter()
    config = neuralnet.NetworkConfig(input_dim=6, hidden_dims=(5,), n_agents=4)
    params = neuralnet.init_parameters(config, seed=3)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 6))
    y = rng.integers(4, size=3)
    targets = rng.uniform(0.2, 0.8, size=3)

    def loss_value() -> float:
        probs, conf, _ = neuralnet.forward(params, x, mode="infer")
        return -float(np.log(probs[np.arange(3), y]).sum()) + 0.5 * float(
            ((conf - targets) ** 2).sum()
        )

    probs, conf, trace = neuralnet.forward(params, x, mode="infer")
    d_sel = probs.copy()
    d_sel[np.arange(3), y] -= 1.0
    d_conf = (conf - targets) * conf * (1.0 - conf)
    grads = dict(neuralnet.backward(params, trace, d_sel, d_conf).tensors())

    h = 1e-5
    worst = 0.0
    checked = 0
    for name, tensor in params.tensors():
        flat = tensor.reshape(-1)
        g_flat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_value()
            flat[i] = orig - h
            down = loss_value()
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            worst = max(
                worst, abs(numeric - g_flat[i]) / max(1e-8, abs(numeric) + abs(g_flat[i]))
            )
            checked += 1
    elapsed = time.perf_counter() - started
    ok = worst < 1e-4 and checked == 65 and elapsed < 10.0
    _verdict(
        "criterion 2, gradient checks",
        ok,
        f"{checked} parameters, max rel error {worst:.2e} < 1e-4, {elapsed:.2f}s < 10s",
    )
    assert ok


def test_criterion_03_oracle_equivalence(benchmark_env):
    from metaorch.fuzzy import evaluate as fuzzy_evaluate

    started = time.perf_counter()
    stream_seed = 20240601
    agree = 0
    for task in benchmark_env.task_stream(500, stream_seed):
        label = oracle_label(task, benchmark_env)
        qualities = [
            fuzzy_evaluate(benchmark_env.raw_score(a, task), a).quality
            for a in benchmark_env.agents
        ]
        brute = max(range(len(qualities)), key=lambda i: (qualities[i], -i))
        agree += int(label.best_agent == brute)
    elapsed = time.perf_counter() - started
    ok = agree == 500 and elapsed < 5.0
    _verdict(
        "criterion 3, oracle equivalence",
        ok,
        f"{agree}/500 agree with brute force, {elapsed:.2f}s < 5s",
    )
    assert ok


def test_criterion_04_training_convergence(trained):
    _, records = trained
    elapsed = TIMINGS["train"]
    ce_ratio = records[-1].cross_entropy_loss / records[0].cross_entropy_loss
    conf_ratio = records[-1].confidence_loss / records[0].confidence_loss
    ok = len(records) == 500 and ce_ratio <= 0.30 and conf_ratio <= 0.20 and elapsed < 120.0
    _verdict(
        "criterion 4, training convergence",
        ok,
        f"final/initial cross-entropy {ce_ratio:.3f} <= 0.30, "
        f"confidence {conf_ratio:.3f} <= 0.20, {elapsed:.1f}s < 120s",
    )
    assert ok


def test_criterion_05_strategy_comparison(run_config, benchmark_env, trained_params, warmup):
    started = time.perf_counter()
    strategies = [
        NeuralStrategy(trained_params),
        RandomStrategy(benchmark_env.n_agents, run_config.random_seed),
        RoundRobinStrategy(benchmark_env.n_agents),
        calibrate_static_best(
            benchmark_env,
            seed=run_config.warmup_seed,
            n_warmup=run_config.static_warmup_tasks,
        ),
    ]
    reports = compare(
        strategies,
        benchmark_env,
        run_config.n_tasks,
        run_config.eval_seed,
        warmup=warmup,
    )
    elapsed = time.perf_counter() - started
    model, random_, round_robin, static = reports
    _SHARED["reports"] = reports

    ratio = model.selection_accuracy / random_.selection_accuracy
    ok = (
        model.selection_accuracy >= 0.80
        and ratio >= 3.0
        and static.selection_accuracy < 0.30
        and static.average_quality >= round_robin.average_quality
        and elapsed < 180.0
    )
    _verdict(
        "criterion 5, strategy comparison",
        ok,
        f"model accuracy {model.selection_accuracy:.3f} >= 0.80, "
        f"{ratio:.2f}x random >= 3x, "
        f"static accuracy {static.selection_accuracy:.3f} < 0.30 with quality "
        f"{static.average_quality:.4f} >= round-robin {round_robin.average_quality:.4f}, "
        f"{elapsed:.1f}s < 180s",
    )
    assert ok


def test_criterion_06_hyperparameter_grid(run_config, benchmark_env):
    base = run_config.train_config()
    started = time.perf_counter()
    full = grid_search(
        benchmark_env,
        GridSpace(),
        n_val_tasks=run_config.val_tasks,
        val_seed=run_config.val_seed,
        base_config=base,
    )
    full_time = time.perf_counter() - started

    started = time.perf_counter()
    full_again = grid_search(
        benchmark_env,
        GridSpace(),
        n_val_tasks=run_config.val_tasks,
        val_seed=run_config.val_seed,
        base_config=base,
    )
    rerun_time = time.perf_counter() - started

    started = time.perf_counter()
    smoke = grid_search(
        benchmark_env,
        SMOKE_GRID,
        n_val_tasks=run_config.val_tasks,
        val_seed=run_config.val_seed,
        base_config=base,
    )
    smoke_time = time.perf_counter() - started

    import io

    def csv_bytes(results):
        import tempfile, os

        fd, path = tempfile.mkstemp(suffix=".csv")
        os.close(fd)
        try:
            write_grid_csv(results, path)
            with open(path, "rb") as f:
                return f.read()
        finally:
            os.remove(path)

    deterministic = csv_bytes(full) == csv_bytes(full_again)
    top = full[0].accuracy
    ok = (
        len(full) == 72
        and top >= 0.85
        and deterministic
        and full_time < 1800.0
        and len(smoke) == 12
        and smoke_time < 180.0
    )
    _verdict(
        "criterion 6, hyperparameter grid",
        ok,
        f"72 combinations, top accuracy {top:.3f} >= 0.85, "
        f"rerun CSV byte-identical: {deterministic}, "
        f"{full_time:.0f}s < 1800s, smoke 12 combinations {smoke_time:.0f}s < 180s",
    )
    assert ok


def test_criterion_07_weight_sensitivity(run_config, benchmark_env, trained_params):
    def eval_run(weights: FuzzyWeights) -> float:
        histories = warmup_histories(
            benchmark_env, run_config.warmup_tasks, seed=run_config.warmup_seed, weights=weights
        )
        report = evaluate(
            NeuralStrategy(trained_params),
            benchmark_env,
            run_config.n_tasks,
            run_config.eval_seed,
            weights,
            histories=histories,
        )
        return report.selection_accuracy

    grid = [
        FuzzyWeights(0.4, 0.4, 0.2),
        FuzzyWeights(0.5, 0.3, 0.2),
        FuzzyWeights(0.3, 0.5, 0.2),
        FuzzyWeights(0.4, 0.3, 0.3),
    ]
    rows = sensitivity_sweep(grid, eval_run)
    accuracies = [acc for _, acc, _ in rows]
    spread = max(accuracies) - min(accuracies)
    ok = spread <= 0.05
    _verdict(
        "criterion 7, weight sensitivity",
        ok,
        "accuracies "
        + ", ".join(f"{a:.3f}" for a in accuracies)
        + f", spread {spread:.3f} <= 0.05",
    )
    assert ok


def test_criterion_08_snapshot_determinism(tmp_path):
    def outputs(directory):
        found = {}
        for p in sorted(directory.iterdir()):
            if p.suffix in (".csv", ".json", ".npz"):
                found[p.name] = p.read_bytes()
        return found

    identical = []

    # train, re-run from its own snapshot
    a, b = tmp_path / "train_a", tmp_path / "train_b"
    assert main(["train", "--out-dir", str(a), "--iterations", "60"]) == 0
    assert main(["train", "--config", str(a / "resolved_config.cfg"), "--out-dir", str(b)]) == 0
    identical.append(("train", outputs(a) == outputs(b), len(outputs(a))))

    # evaluate, all strategies, re-run from its snapshot
    c, d = tmp_path / "eval_a", tmp_path / "eval_b"
    ckpt = str(a / "checkpoint.npz")
    assert (
        main(
            [
                "evaluate",
                "--out-dir",
                str(c),
                "--checkpoint",
                ckpt,
                "--strategy",
                "all",
                "--n-tasks",
                "120",
            ]
        )
        == 0
    )
    assert main(["evaluate", "--config", str(c / "resolved_config.cfg"), "--out-dir", str(d)]) == 0
    identical.append(("evaluate", outputs(c) == outputs(d), len(outputs(c))))

    # sensitivity, re-run from its snapshot
    e, f = tmp_path / "sens_a", tmp_path / "sens_b"
    small = tmp_path / "small.cfg"
    small.write_text("n_tasks = 120\nwarmup_tasks = 30\n")
    assert (
        main(
            [
                "sensitivity",
                "--config",
                str(small),
                "--out-dir",
                str(e),
                "--checkpoint",
                ckpt,
            ]
        )
        == 0
    )
    assert (
        main(["sensitivity", "--config", str(e / "resolved_config.cfg"), "--out-dir", str(f)])
        == 0
    )
    identical.append(("sensitivity", outputs(e) == outputs(f), len(outputs(e))))

    ok = all(same for _, same, _ in identical) and all(n > 0 for _, _, n in identical)
    _verdict(
        "criterion 8, snapshot determinism",
        ok,
        "; ".join(f"{cmd}: {n} outputs byte-identical={same}" for cmd, same, n in identical),
    )
    assert ok


def test_criterion_09_confusion_identities(benchmark_env):
    reports = list(_SHARED.get("reports", ()))
    reports.append(evaluate(RoundRobinStrategy(3), benchmark_env, 97, eval_seed=31))
    reports.append(evaluate(RandomStrategy(3, seed=6), benchmark_env, 41, eval_seed=32))
    failures = []
    for report in reports:
        total = int(report.confusion.sum())
        trace = int(np.trace(report.confusion))
        if total != report.n_tasks:
            failures.append(f"{report.strategy}: entry sum {total} != {report.n_tasks}")
        if trace / report.n_tasks != report.selection_accuracy:
            failures.append(f"{report.strategy}: trace/total != accuracy")
        report.validate()
    ok = not failures and len(reports) >= 2
    _verdict(
        "criterion 9, confusion identities",
        ok,
        f"{len(reports)} reports exact" if ok else "; ".join(failures),
    )
    assert ok


def test_criterion_10_hitl_contract(trained_params, tmp_path):
    env = Environment(EnvConfig())
    flush_path = tmp_path / "feedback.jsonl"
    server = HitlServer(env, trained_params, feedback_path=str(flush_path))
    app = create_app(server)
    client = TestClient(app)

    assert client.get("/api/health").json()["status"] == "ok"

    # approve path
    step = client.post("/api/step").json()
    r = client.post(f"/api/decision/{step['decision_id']}", json={"action": "approve"})
    assert r.status_code == 200

    # override paths (three of them, for a measurable injection effect)
    overridden = []
    for _ in range(3):
        step = client.post("/api/step").json()
        other = (step["model_choice"] + 1) % env.n_agents
        r = client.post(
            f"/api/decision/{step['decision_id']}",
            json={"action": "override", "agent": other},
        )
        assert r.status_code == 200
        overridden.append(step["decision_id"])

    # conflict path: a second resolution of a settled decision
    conflict = client.post(
        f"/api/decision/{overridden[-1]}", json={"action": "approve"}
    )
    assert conflict.status_code == 409

    # racing double resolution: exactly one success
    did = client.post("/api/step").json()["decision_id"]
    results = []
    barrier = threading.Barrier(2)

    def worker():
        with TestClient(app) as c:
            barrier.wait()
            results.append(
                c.post(f"/api/decision/{did}", json={"action": "approve"}).status_code
            )

    threads = [threading.Thread(target=worker) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    race_ok = sorted(results) == [200, 409]

    # flush path, then round-trip into feedback injection
    flushed = client.post("/api/feedback/flush", json={})
    assert flushed.status_code == 200
    records, errors = read_log(flushed.json()["path"])
    assert errors == [] and len(records) == flushed.json()["count"] == 5

    corrections = [
        (regenerate_task(rec, env.config), rec.human_choice)
        for rec in records
        if rec.action == "override"
    ]
    assert len(corrections) == 3
    histories = fresh_histories(env.n_agents)
    xs = np.stack([encode_input(t, histories) for t, _ in corrections])
    targets = [agent for _, agent in corrections]
    before = neuralnet.forward(trained_params, xs)[0]
    tuned, inject_errors = inject_feedback(
        corrections, trained_params, TrainConfig(learning_rate=0.05), histories=histories
    )
    assert inject_errors == []
    after = neuralnet.forward(tuned, xs)[0]
    before_mean = float(np.mean([before[i, t] for i, t in enumerate(targets)]))
    after_mean = float(np.mean([after[i, t] for i, t in enumerate(targets)]))

    ok = race_ok and after_mean > before_mean
    _verdict(
        "criterion 10, human review contract",
        ok,
        f"step/approve/override/conflict/flush exercised, race {sorted(results)}, "
        f"overridden-agent mean probability {before_mean:.4f} -> {after_mean:.4f}",
    )
    assert ok
