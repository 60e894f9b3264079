"""Command-line entry point.

Subcommands::

    aawr demo    --env NAME --episodes N --seed S --out FILE
    aawr train   --config FILE [--seed S] [--out DIR]
    aawr verify  [--seed S] [--out FILE]
    aawr compare RUN_DIR [RUN_DIR ...] [--threshold X] [--out FILE]

Exit codes: 0 success, 1 runtime error, 2 configuration or usage error,
3 failed verification.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from aawr import __version__, verify
from aawr.buffer import SchemaError, export_buffer
from aawr.envs import ConfigError, make_env, scripted_demo_rollouts
from aawr.pomdp import SpecError
from aawr.trainer import RunConfig, RunMetrics, run, save_agent

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2, 3

METRICS_FILE = "metrics.csv"
MANIFEST_FILE = "manifest.json"
CHECKPOINT_FILE = "checkpoint.bin"
CONFIG_ECHO_FILE = "config.json"


class UsageError(Exception):
    pass


def _parse_json(text: str, what: str) -> dict:
    try:
        out = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} is not valid JSON: {exc}") from None
    if not isinstance(out, dict):
        raise ConfigError(f"{what} must be a JSON object")
    return out


# --------------------------------------------------------------------------
# demo


def cmd_demo(args) -> int:
    params = _parse_json(args.env_params, "--env-params") if args.env_params else {}
    entry = make_env(args.env, **params)
    if args.episodes < 0:
        raise ConfigError("--episodes must be nonnegative")
    episodes = scripted_demo_rollouts(entry, args.episodes, seed=args.seed)
    export_buffer(episodes, args.out)
    ok = sum(ep[-1].done and ep[-1].r > 0 for ep in episodes)
    print(f"wrote {len(episodes)} episodes ({ok} successful) to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# train


def load_run_config(text: str, seed: int | None = None) -> RunConfig:
    """Parse a run config; ``seed`` overrides both the training and the demo seed."""
    raw = _parse_json(text, "config")
    raw.pop("out", None)
    if seed is not None:
        raw.setdefault("training", {})
        raw["training"] = dict(raw["training"], seed=seed)
        raw["demo_seed"] = seed
    cfg = RunConfig.from_dict(raw)
    make_env(cfg.env, **cfg.env_params)  # validate env name and parameters before any compute
    return cfg


def cmd_train(args) -> int:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = load_run_config(text, args.seed)
    out = args.out or _parse_json(text, "config").get("out")
    if not out:
        raise ConfigError("no output directory: pass --out or set \"out\" in the config")
    run_dir = Path(out)
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {run_dir} is not writable: {exc}") from None
    (run_dir / CONFIG_ECHO_FILE).write_text(text)
    result = run(cfg)
    result.metrics.write(run_dir / METRICS_FILE)
    save_agent(result.agent, run_dir / CHECKPOINT_FILE)
    manifest = {
        "version": __version__,
        "config": text,
        "config_path": str(path),
        "seed": cfg.training.seed,
        "env": cfg.env,
        "env_params": cfg.env_params,
        "method": cfg.method,
        "demo_success": result.demo_success,
        "offline_success": result.offline_eval.success_rate,
        "final_success": result.final_eval.success_rate,
        "grad_steps": result.agent.grad_steps,
        "env_steps": result.agent.env_steps,
    }
    with open(run_dir / MANIFEST_FILE, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{cfg.method} on {cfg.env} seed {cfg.training.seed}: demo {result.demo_success:.3f}, "
          f"offline {result.offline_eval.success_rate:.3f}, final {result.final_eval.success_rate:.3f} -> {run_dir}")
    return EXIT_OK


# --------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    report = verify.run_suite(seed=args.seed)
    print(verify.format_report(report))
    if args.out:
        verify.write_report(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


# --------------------------------------------------------------------------
# compare


def steps_to_threshold(metrics: RunMetrics, threshold: float) -> int | None:
    """Total steps (gradient plus environment) at the first evaluation reaching ``threshold``."""
    for row in metrics.rows:
        if row["success_rate"] >= threshold:
            return row["grad_step"] + row["env_step"]
    return None


def summarize_runs(run_dirs, threshold: float = 0.9) -> list[dict]:
    """One row per (env, method) with final success mean and standard error over runs."""
    groups: dict[tuple, list] = {}
    for d in run_dirs:
        d = Path(d)
        if not (d / METRICS_FILE).exists():
            raise ConfigError(f"{d}: no {METRICS_FILE} found")
        try:
            manifest = json.loads((d / MANIFEST_FILE).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{d}: unreadable {MANIFEST_FILE}: {exc}") from None
        metrics = RunMetrics.read(d / METRICS_FILE)
        if not metrics.rows:
            raise ConfigError(f"{d}: {METRICS_FILE} has no rows")
        env_key = manifest["env"] + (json.dumps(manifest["env_params"], sort_keys=True) if manifest.get("env_params") else "")
        groups.setdefault((env_key, manifest["method"]), []).append(
            (metrics.rows[-1]["success_rate"], steps_to_threshold(metrics, threshold), str(d)))
    rows = []
    for (env, method) in sorted(groups):
        runs = groups[(env, method)]
        final = np.array([r[0] for r in runs])
        stderr = float(np.std(final, ddof=1) / math.sqrt(len(final))) if len(final) > 1 else 0.0
        reached = [r[1] for r in runs if r[1] is not None]
        rows.append({
            "env": env, "method": method, "n_runs": len(runs),
            "final_success_mean": float(final.mean()), "final_success_stderr": stderr,
            "final_success_median": float(np.median(final)),
            "threshold": threshold, "n_reached": len(reached),
            "median_steps_to_threshold": float(np.median(reached)) if reached else None,
            "runs": [r[2] for r in runs],
        })
    return rows


def format_table(rows: list[dict]) -> str:
    header = f"{'env':<22} {'method':<6} {'n':>3}  {'final success':>17}  {'median':>6}  {'steps to thr':>12}"
    lines = [header, "-" * len(header)]
    for r in rows:
        steps = "-" if r["median_steps_to_threshold"] is None else f"{r['median_steps_to_threshold']:.0f}"
        lines.append(f"{r['env']:<22} {r['method']:<6} {r['n_runs']:>3}  "
                     f"{r['final_success_mean']:>8.3f} ± {r['final_success_stderr']:<6.3f}  "
                     f"{r['final_success_median']:>6.3f}  {steps:>12}")
    return "\n".join(lines)


def cmd_compare(args) -> int:
    rows = summarize_runs(args.run_dirs, args.threshold)
    print(format_table(rows))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


# --------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aawr", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("demo", help="write scripted demonstrations as line-delimited JSON")
    d.add_argument("--env", required=True)
    d.add_argument("--env-params", default="", help="JSON object of environment parameters")
    d.add_argument("--episodes", type=int, default=100)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_demo)

    t = sub.add_parser("train", help="offline then online training from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, default=None, help="overrides the training and demo seeds")
    t.add_argument("--out", default=None, help="run directory (defaults to the config's \"out\")")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("verify", help="run the exact theory checks")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default=None, help="JSON report path")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("compare", help="summarize run directories")
    c.add_argument("run_dirs", nargs="+")
    c.add_argument("--threshold", type=float, default=0.9)
    c.add_argument("--seed", type=int, default=0, help="accepted for uniformity; aggregation is deterministic")
    c.add_argument("--out", default=None, help="JSON rows path")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, SpecError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
