"""Theory witness suite: exact checks on shipped and seeded random instances.

Each check returns a :class:`Check` with the computed quantities, the
tolerance it is judged against and a verdict. :func:`run_suite` collects them
into a JSON-serializable report.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from aawr import __version__, envs, nn, oracle
from aawr.losses import Batch, v_expectile_loss
from aawr.pomdp import build_env_agent_mdp


@dataclass
class Check:
    name: str
    passed: bool
    tolerance: str
    quantities: dict = field(default_factory=dict)


def check_asymmetric_fixed_point(seed: int = 0, n_random: int = 5, tol: float = 1e-8) -> Check:
    """Iterated privileged TD matches the direct linear solve."""
    rng = np.random.default_rng(seed)
    instances = [("tiger", build_env_agent_mdp(envs.tiger().spec, 2))]
    for i in range(n_random):
        instances.append((f"random{i}", build_env_agent_mdp(oracle.random_pomdp(rng), 2)))
    errors = {}
    for name, mdp in instances:
        mu = oracle.random_policy(mdp, rng)
        q_it, _ = oracle.evaluate_privileged(mdp, mu, tol=1e-12, method="iterate")
        q_lin, _ = oracle.evaluate_privileged(mdp, mu, method="solve")
        errors[name] = float(np.max(np.abs(q_it - q_lin)))
    worst = max(errors.values())
    return Check("asymmetric_fixed_point", worst < tol, f"sup-norm < {tol:g}", {"sup_error": errors, "max": worst})


def check_symmetric_bias(seed: int = 0, gap_min: float = 0.01, tol: float = 1e-8) -> Check:
    """Unprivileged TD is biased on the aliased instance and exact when fully observed."""
    aliased = oracle.symmetric_bias_witness()
    full = oracle.symmetric_bias_witness(oracle.fully_observed_pomdp(np.random.default_rng(seed)))
    passed = aliased["gap"] > gap_min and full["gap"] < tol and aliased["contraction_ok"]
    return Check("symmetric_td_bias", passed, f"aliased gap > {gap_min:g}; fully observed gap < {tol:g}",
                 {"aliased_gap": aliased["gap"], "fully_observed_gap": full["gap"],
                  "max_contraction_ratio": aliased["max_contraction_ratio"],
                  "contraction_ok": aliased["contraction_ok"]})


def check_closed_form(seed: int = 0, n_instances: int = 10, beta: float = 1.0, tol: float = 1e-5) -> Check:
    """Closed-form privileged update equals the numerical maximizer of the weighted likelihood."""
    rng = np.random.default_rng(seed)
    worst = []
    for _ in range(n_instances):
        mdp = build_env_agent_mdp(oracle.random_pomdp(rng), 2)
        mu = oracle.random_policy(mdp, rng)
        table, vis = oracle.value_table(mdp, mu)
        closed = oracle.awr_closed_form_update(mu, table.adv_priv, beta, vis, kind="aawr")
        numeric = oracle.maximize_awr_objective(mu, table.adv_priv, beta, vis)
        worst.append(float(oracle.total_variation(closed, numeric)[vis.visited_z].max()))
    return Check("closed_form_update", max(worst) < tol, f"per-agent-state TV < {tol:g}",
                 {"max_tv": max(worst), "per_instance": worst})


def check_jensen(tol: float = 1e-9) -> Check:
    """Mean privileged weight is cosh(a/beta) against agent-state weight 1, and the updates disagree."""
    w = oracle.jensen_gap_witness(beta=1.0, a=1.0)
    passed = abs(w["aawr_weight_mean"] - w["cosh"]) < tol and abs(w["sawr_weight"] - 1.0) < tol and w["argmax_differs"]
    lot = w["argmax_instance"]
    return Check("jensen_gap", passed, f"|mean weight - cosh(1)| < {tol:g}; argmax differs",
                 {"aawr_weight_mean": w["aawr_weight_mean"], "cosh_1": w["cosh"], "sawr_weight": w["sawr_weight"],
                  "pi_aawr": lot["pi_aawr"], "pi_sawr": lot["pi_sawr"], "argmax_differs": w["argmax_differs"]})


def check_improvement_identity(seed: int = 0, n_instances: int = 5, tol: float = 1e-8) -> Check:
    """``J(pi) - J(mu)`` equals the visitation-weighted advantage of ``pi`` under ``mu``."""
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(n_instances):
        mdp = build_env_agent_mdp(oracle.random_pomdp(rng), 2)
        mu, pi = oracle.random_policy(mdp, rng), oracle.random_policy(mdp, rng)
        lhs, rhs = oracle.improvement_identity(mdp, pi, mu)
        errs.append(abs(lhs - rhs))
    return Check("improvement_identity", max(errs) < tol, f"|lhs - rhs| < {tol:g}", {"max_error": max(errs)})


def fit_expectile(values, tau: float, steps: int = 3000, lr: float = 0.05) -> float:
    """Fit a constant V to the values with the expectile loss; returns the fitted constant.

    Every row shares one input; the values enter through a frozen Q whose
    per-action biases are the samples.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    x = np.ones((n, 1))
    q = nn.MlpParams([np.zeros((1, n))], [values.copy()], "relu")
    batch = Batch("symmetric", x, x, x, np.arange(n), np.zeros(n), np.zeros(n))
    v = nn.mlp_init([1, 1], 0, zero=True)
    opt = nn.adam_init(v)
    for _ in range(steps):
        res = v_expectile_loss(batch, v, q, tau)
        nn.adam_step(v, res.grads, opt, lr)
    return float(nn.predict(v, x[:1])[0, 0])


def check_expectile(tol: float = 0.01) -> Check:
    fits = {tau: fit_expectile([0.0, 10.0], tau) for tau in (0.5, 0.7, 0.9)}
    monotone = fits[0.5] <= fits[0.7] <= fits[0.9]
    passed = abs(fits[0.7] - 7.0) < tol and abs(fits[0.5] - 5.0) < tol and monotone
    return Check("expectile", passed, f"within {tol:g} of 7.0 (tau=0.7) and 5.0 (tau=0.5); nondecreasing in tau",
                 {f"tau_{tau}": val for tau, val in fits.items()})


CHECKS = (check_asymmetric_fixed_point, check_symmetric_bias, check_closed_form, check_jensen,
          check_improvement_identity, check_expectile)


def run_suite(seed: int = 0) -> dict:
    checks = []
    for fn in CHECKS:
        if "seed" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
            checks.append(fn(seed=seed))
        else:
            checks.append(fn())
    return {"version": __version__, "seed": seed, "passed": all(c.passed for c in checks),
            "checks": [asdict(c) for c in checks]}


def format_report(report: dict) -> str:
    lines = []
    for c in report["checks"]:
        verdict = "PASS" if c["passed"] else "FAIL"
        shown = ", ".join(f"{k}={_short(v)}" for k, v in c["quantities"].items() if not isinstance(v, (list, dict)))
        lines.append(f"{verdict}  {c['name']:<24} {shown}  [{c['tolerance']}]")
    lines.append("all checks passed" if report["passed"] else "some checks FAILED")
    return "\n".join(lines)


def _short(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def write_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
