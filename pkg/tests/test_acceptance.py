"""Acceptance criteria, one test each.

Every test records a one-line PASS/FAIL verdict; the lines are printed together
in the terminal summary (see ``conftest.pytest_terminal_summary``). Criteria 7
and 8 share five seeds of shipped-config training runs per method, which makes
this module the slow part of the suite (roughly half an hour on one core).
"""

import json
from importlib import resources

import numpy as np
import pytest

from aawr import cli, envs, verify
from aawr.trainer import PoisonedEnv, evaluate, load_agent
from conftest import loss_gradient_errors, oracle_critic_tv

VERDICTS = {}
SEEDS = range(5)
METHODS = ("aawr", "sawr", "bc")


def record(n, name, passed, detail):
    VERDICTS[n] = f"{'PASS' if passed else 'FAIL'}  criterion {n:>2} {name}: {detail}"
    print(VERDICTS[n])
    assert passed, VERDICTS[n]


def shipped_config(name):
    return str(resources.files("aawr").joinpath("configs", name))


@pytest.fixture(scope="module")
def grid_runs(tmp_path_factory):
    """Shipped grid configs, five seeds each, trained through the CLI."""
    root = tmp_path_factory.mktemp("grid_runs")
    out = {}
    for method in METHODS:
        for seed in SEEDS:
            d = root / f"{method}-{seed}"
            code = cli.main(["train", "--config", shipped_config(f"grid_{method}.json"), "--seed", str(seed),
                             "--out", str(d)])
            assert code == cli.EXIT_OK
            out[method, seed] = d
    return out


def manifests(grid_runs, method):
    return [json.loads((grid_runs[method, s] / cli.MANIFEST_FILE).read_text()) for s in SEEDS]


def test_criterion_01_gradient_correctness():
    worst = {}
    for seed in range(20):
        for name, err in loss_gradient_errors(seed).items():
            worst[name] = max(worst.get(name, 0.0), err)
    record(1, "gradient correctness", max(worst.values()) < 1e-4,
           "max rel. error " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + " (< 1e-4)")


def test_criterion_02_asymmetric_fixed_point():
    c = verify.check_asymmetric_fixed_point()
    record(2, "asymmetric fixed point", c.passed, f"max sup-norm gap {c.quantities['max']:.1e} (< 1e-8)")


def test_criterion_03_symmetric_bias():
    c = verify.check_symmetric_bias()
    q = c.quantities
    record(3, "symmetric TD bias", c.passed,
           f"aliased gap {q['aliased_gap']:.4f} (> 0.01), fully observed gap {q['fully_observed_gap']:.1e} (< 1e-8)")


def test_criterion_04_closed_form_and_neural_trainer():
    c = verify.check_closed_form()
    mean_tv, max_tv = oracle_critic_tv()
    passed = c.passed and mean_tv < 0.02
    record(4, "closed-form update", passed,
           f"exact max TV {c.quantities['max_tv']:.1e} (< 1e-5); oracle-critic trainer mean TV {mean_tv:.4f} "
           f"(< 0.02), worst agent state {max_tv:.4f}")


def test_criterion_05_jensen_separation():
    c = verify.check_jensen()
    q = c.quantities
    record(5, "Jensen separation", c.passed,
           f"AAWR weight {q['aawr_weight_mean']:.10f} vs cosh(1) {q['cosh_1']:.10f}, SAWR weight {q['sawr_weight']:.1f}, "
           f"argmax differs {q['argmax_differs']}")


def test_criterion_06_expectile():
    c = verify.check_expectile()
    q = c.quantities
    record(6, "expectile semantics", c.passed,
           f"tau 0.5 -> {q['tau_0.5']:.4f}, 0.7 -> {q['tau_0.7']:.4f}, 0.9 -> {q['tau_0.9']:.4f}")


def test_criterion_07_online_ordering(grid_runs):
    med = {m: float(np.median([r["final_success"] for r in manifests(grid_runs, m)])) for m in METHODS}
    demo = float(np.median([r["demo_success"] for r in manifests(grid_runs, "aawr")]))
    band = all(0.2 <= r["demo_success"] <= 0.5 for m in METHODS for r in manifests(grid_runs, m))
    passed = band and med["aawr"] >= 0.9 and med["aawr"] >= med["sawr"] and med["bc"] <= demo + 0.2
    record(7, "online ordering", passed,
           f"median final success AAWR {med['aawr']:.3f} (>= 0.9), SAWR {med['sawr']:.3f}, BC {med['bc']:.3f} "
           f"(<= demo {demo:.3f} + 0.2), demos in band {band}")


def test_criterion_08_offline_ordering(grid_runs):
    # the offline phase of each run is exactly the n_on = 0 run, evaluated on the same stream
    med = {m: float(np.median([r["offline_success"] for r in manifests(grid_runs, m)])) for m in METHODS}
    passed = med["aawr"] >= med["sawr"] >= med["bc"] - 0.05
    record(8, "offline ordering", passed,
           f"median offline success AAWR {med['aawr']:.3f} >= SAWR {med['sawr']:.3f} >= BC {med['bc']:.3f} - 0.05")


def test_criterion_09_deployment_isolation(grid_runs):
    agent = load_agent(grid_runs["aawr", 0] / cli.CHECKPOINT_FILE)
    m = manifests(grid_runs, "aawr")[0]
    entry = envs.make_env(m["env"], **m["env_params"])
    same = True
    for greedy in (True, False):
        a = evaluate(agent, entry, 200, seed=11, greedy=greedy)
        b = evaluate(agent, entry, 200, seed=11, greedy=greedy, env_cls=PoisonedEnv)
        same &= a.actions == b.actions and np.array_equal(a.returns, b.returns)
    record(9, "deployment isolation", same, "200 greedy and 200 sampled episodes identical under poisoned fields")


def test_criterion_10_reproducibility(tmp_path):
    cfg = json.loads(resources.files("aawr").joinpath("configs", "grid_aawr.json").read_text())
    cfg["training"].update(n_off=2000, n_on=2000)
    cfg["eval"].update(every_grad=500, every_env=500)
    path = tmp_path / "short.json"
    path.write_text(json.dumps(cfg))
    csvs = []
    for name in ("a", "b"):
        assert cli.main(["train", "--config", str(path), "--seed", "3", "--out", str(tmp_path / name)]) == 0
        csvs.append((tmp_path / name / cli.METRICS_FILE).read_bytes())
    record(10, "reproducibility", csvs[0] == csvs[1], f"two runs, {len(csvs[0])} bytes of metrics, byte-identical")
