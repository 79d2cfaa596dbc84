"""Command-line interface: validate, predict, run, averaging.

Exit codes form a stable contract:

    0  success / all tolerances met
    1  unreadable or malformed configuration
    2  assumption failure, tolerance failure, or divergence
    3  internal inconsistency (independent solution routes disagree)

The configuration is one JSON document holding the system matrices (row
major nested arrays), the noise blocks under "noise", the two schedules
under "beta" and "gamma", and optional run parameters under "run" that the
command-line flags override.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import engine, estimator, theory
from .errors import Diverged, TwoScaleError
from .model import SystemSpec, averaging_system, validate_system
from .schedules import SchedulePair, StepSchedule

EXIT_OK = 0
EXIT_IO = 1
EXIT_TOLERANCE = 2
EXIT_INTERNAL = 3

PROPAGATE_TOL = 0.05
ENSEMBLE_REL_TOL = 0.10
ENSEMBLE_SE_FACTOR = 4.0
TRANSFORMED_TOL = 1e-8
PREDICT_CONSISTENCY_TOL = 1e-8


@dataclass
class RunConfig:
    """Parsed configuration plus run parameters, flags taking precedence."""

    system: SystemSpec
    schedules: SchedulePair
    replicas: int = 1000
    steps: int = 10000
    seed: int = 0
    jobs: int = 1
    stride: int = 0  # 0 means auto
    checkpoints: list[int] | None = None
    out: str | None = None

    def canonical(self) -> str:
        doc = self.system.to_dict()
        doc.update(self.schedules.to_dict())
        doc["run"] = {
            "replicas": self.replicas,
            "steps": self.steps,
            "seed": self.seed,
            "jobs": self.jobs,
            "stride": self.stride,
            "checkpoints": self.checkpoints,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def load_config(path: str, args=None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    system = SystemSpec.from_dict(doc)
    schedules = SchedulePair(
        slow=StepSchedule.from_dict(doc["beta"]),
        fast=StepSchedule.from_dict(doc["gamma"]),
    )
    run = doc.get("run", {})
    cfg = RunConfig(
        system=system,
        schedules=schedules,
        replicas=int(run.get("replicas", 1000)),
        steps=int(run.get("steps", 10000)),
        seed=int(run.get("seed", 0)),
        jobs=int(run.get("jobs", 1)),
        stride=int(run.get("stride", 0)),
        checkpoints=[int(c) for c in run["checkpoints"]] if run.get("checkpoints") else None,
    )
    if args is not None:
        for attr in ("replicas", "steps", "seed", "jobs", "stride", "out"):
            val = getattr(args, attr, None)
            if val is not None:
                setattr(cfg, attr, val)
    return cfg


def geometric_checkpoints(K: int) -> list[int]:
    """Log-spaced checkpoints 100, 1000, ... capped by and including K."""
    cps = []
    c = 100
    while c < K:
        cps.append(c)
        c *= 10
    cps.append(K)
    return sorted(set(cps))


def _write_lines(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _validation_gate(cfg: RunConfig, skip: bool) -> int | None:
    report = validate_system(cfg.system, cfg.schedules)
    if not report.passed and not skip:
        for line in report.lines():
            print(line)
        print("validation failed; rerun with --skip-validate to force")
        return EXIT_TOLERANCE
    return None


def cmd_validate(args) -> int:
    cfg = load_config(args.config, args)
    report = validate_system(cfg.system, cfg.schedules)
    for line in report.lines():
        print(line)
    print(f"overall: {'pass' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_TOLERANCE


def cmd_predict(args) -> int:
    cfg = load_config(args.config, args)
    gate = _validation_gate(cfg, args.skip_validate)
    if gate is not None:
        return gate
    beta_bar = cfg.schedules.beta_bar
    pred = theory.predict_full(cfg.system, beta_bar)
    reduced = theory.predict_reduced(cfg.system, beta_bar)
    opt_cov, g1_opt, g_opt = theory.optimal_gain_covariance(cfg.system)

    scale = 1.0 + float(np.linalg.norm(pred.Sigma11))
    discrepancy = float(np.linalg.norm(pred.Sigma11 - reduced)) / scale
    print(f"full-vs-reduced slow-block discrepancy: {discrepancy:.3e}")

    lines = theory.matrix_csv_lines(
        {
            "Delta": pred.Delta,
            "Q": pred.Q,
            "Sigma11": pred.Sigma11,
            "Sigma12": pred.Sigma12,
            "Sigma22": pred.Sigma22,
            "Sigma11_reduced": reduced,
            "Sigma11_opt": opt_cov,
            "G1_opt": g1_opt,
            "G_opt": g_opt,
        }
    )
    _write_lines(lines, cfg.out)
    if discrepancy >= PREDICT_CONSISTENCY_TOL:
        print("solver routes disagree beyond tolerance")
        return EXIT_INTERNAL
    return EXIT_OK


def _run_propagate(cfg: RunConfig) -> int:
    cps = cfg.checkpoints or geometric_checkpoints(cfg.steps)
    trace = engine.propagate_covariance(cfg.system, cfg.schedules, None, cfg.steps, cps)
    pred = theory.predict_full(cfg.system, cfg.schedules.beta_bar)

    header = ["k", "beta", "gamma"]
    n, m = cfg.system.n, cfg.system.m
    header += [f"S11_{i}_{j}" for i in range(n) for j in range(n)]
    header += [f"S12_{i}_{j}" for i in range(n) for j in range(m)]
    header += [f"S22_{i}_{j}" for i in range(m) for j in range(m)]
    lines = [",".join(header)]
    for cp in trace:
        vals = [str(cp.k), engine.format_float(cp.beta), engine.format_float(cp.gamma)]
        for block in (cp.Sigma11, cp.Sigma12, cp.Sigma22):
            vals += [engine.format_float(v) for v in np.asarray(block).ravel()]
        lines.append(",".join(vals))
    _write_lines(lines, cfg.out)

    final = trace[-1]
    err = float(np.linalg.norm(final.Sigma11 - pred.Sigma11) / np.linalg.norm(pred.Sigma11))
    print(f"final slow-block relative error vs prediction: {err:.4%} at k={final.k}")
    return EXIT_OK if err < PROPAGATE_TOL else EXIT_TOLERANCE


def _ensemble_stats_lines(cfg: RunConfig, result: engine.EnsembleResult) -> list[str]:
    n, m = cfg.system.n, cfg.system.m
    header = ["k", "beta", "gamma"]
    header += [f"S11_{i}_{j}" for i in range(n) for j in range(n)]
    header += [f"S12_{i}_{j}" for i in range(n) for j in range(m)]
    header += [f"S22_{i}_{j}" for i in range(m) for j in range(m)]
    lines = [",".join(header)]
    for cp in result.checkpoints:
        if cp.k == 0:
            continue
        S11, S12, S22 = estimator.scaled_covariances(cp.theta_hat, cp.r_hat, cp.beta, cp.gamma)
        vals = [str(cp.k), engine.format_float(cp.beta), engine.format_float(cp.gamma)]
        for block in (S11, S12, S22):
            vals += [engine.format_float(v) for v in np.asarray(block).ravel()]
        lines.append(",".join(vals))
    return lines


def _entrywise_pass(est, pred, se, rel_tol=ENSEMBLE_REL_TOL, se_factor=ENSEMBLE_SE_FACTOR) -> bool:
    err = np.abs(np.asarray(est) - np.asarray(pred))
    tol = np.maximum(rel_tol * np.abs(np.asarray(pred)), se_factor * np.asarray(se))
    return bool(np.all(err <= tol))


def _run_ensemble(cfg: RunConfig) -> int:
    cps = cfg.checkpoints or geometric_checkpoints(cfg.steps)
    result = engine.run_ensemble(
        cfg.system, cfg.schedules, cfg.replicas, cfg.steps, cps, cfg.seed, jobs=cfg.jobs
    )
    lines = _ensemble_stats_lines(cfg, result)
    _write_lines(lines, cfg.out)

    pred = theory.predict_full(cfg.system, cfg.schedules.beta_bar)
    cp = result.final
    S11, S12, S22 = estimator.scaled_covariances(cp.theta_hat, cp.r_hat, cp.beta, cp.gamma)
    SE11, SE12, SE22 = estimator.standard_errors(cp.theta_hat, cp.r_hat, cp.beta, cp.gamma)
    ok = _entrywise_pass(S11, pred.Sigma11, SE11) and _entrywise_pass(S22, pred.Sigma22, SE22)
    print(f"slow block at k={cp.k}: estimate {S11.ravel()} vs prediction {pred.Sigma11.ravel()}")
    print(f"fast block at k={cp.k}: estimate {S22.ravel()} vs prediction {pred.Sigma22.ravel()}")
    print(f"ensemble tolerance ({ENSEMBLE_REL_TOL:.0%} or {ENSEMBLE_SE_FACTOR:.0f} SE): "
          f"{'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_TOLERANCE


def _run_normality(cfg: RunConfig) -> int:
    result = engine.run_ensemble(
        cfg.system, cfg.schedules, cfg.replicas, cfg.steps, [cfg.steps], cfg.seed, jobs=cfg.jobs
    )
    pred = theory.predict_full(cfg.system, cfg.schedules.beta_bar)
    cp = result.final
    report = estimator.normality_check(cp.theta_hat, cp.beta, pred.Sigma11)
    for line in report.lines():
        print(line)
    if cfg.out:
        row = report.csv_row()
        _write_lines(
            [",".join(row.keys()), ",".join(engine.format_float(v) if isinstance(v, float) else str(v) for v in row.values())],
            cfg.out,
        )
    return EXIT_OK if report.passed else EXIT_TOLERANCE


def _run_transformed_check(cfg: RunConfig) -> int:
    stride = cfg.stride or max(1, cfg.steps // 100)
    stream = engine.noise_stream(cfg.system, cfg.seed, 0)
    states = engine.simulate(cfg.system, cfg.schedules, None, cfg.steps, stream, stride)
    run = engine.simulate_transformed(
        cfg.system, cfg.schedules, cfg.steps, stream, record_stride=stride
    )
    rebuilt = engine.reconstruct_original(cfg.system, run)
    by_k = {st.k: st for st in states}
    worst = 0.0
    for st in rebuilt:
        ref = by_k.get(st.k)
        if ref is None:
            continue
        ref_vec = np.concatenate([ref.theta, ref.r])
        new_vec = np.concatenate([st.theta, st.r])
        err = float(np.linalg.norm(new_vec - ref_vec) / (1.0 + np.linalg.norm(ref_vec)))
        worst = max(worst, err)
    print(f"max relative reconstruction error over {len(rebuilt)} recorded states: {worst:.3e}")
    print(f"decoupling start index: {run.k0}; final decoupling norm {run.lseq.final_norm:.3e}")
    return EXIT_OK if worst <= TRANSFORMED_TOL else EXIT_TOLERANCE


def cmd_run(args) -> int:
    cfg = load_config(args.config, args)
    gate = _validation_gate(cfg, args.skip_validate)
    if gate is not None:
        return gate
    try:
        if args.mode == "propagate":
            return _run_propagate(cfg)
        if args.mode == "ensemble":
            return _run_ensemble(cfg)
        if args.mode == "normality":
            return _run_normality(cfg)
        if args.mode == "transformed-check":
            return _run_transformed_check(cfg)
    except Diverged as exc:
        print(f"diverged: {exc}")
        return EXIT_TOLERANCE
    raise AssertionError(f"unknown mode {args.mode}")


def cmd_averaging(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    A = np.asarray(doc["A"], dtype=np.float64)
    b = np.asarray(doc["b"], dtype=np.float64)
    Gamma = np.asarray(doc["Gamma"], dtype=np.float64)

    spec = averaging_system(A, b, Gamma)
    # Slow schedule 1/(k+1) so the scaled slow covariance is the
    # root-k-scaled covariance of the running average.
    pair = SchedulePair(
        slow=StepSchedule(base=1.0, horizon_scale=1.0, exponent=1.0),
        fast=StepSchedule(base=0.5, horizon_scale=10.0, exponent=0.7),
    )
    N = args.replicas or 4000
    K = args.steps or 100000
    seed = args.seed if args.seed is not None else 0

    predicted = theory.predict_reduced(spec, beta_bar=1.0)
    result = engine.run_ensemble(spec, pair, N, K, [K], seed, jobs=args.jobs or 1)
    cp = result.final
    S11, _, _ = estimator.scaled_covariances(cp.theta_hat, cp.r_hat, cp.beta, cp.gamma)
    SE11, _, _ = estimator.standard_errors(cp.theta_hat, cp.r_hat, cp.beta, cp.gamma)

    err = np.abs(S11 - predicted)
    tol = ENSEMBLE_REL_TOL * np.abs(predicted) + ENSEMBLE_SE_FACTOR * SE11
    ok = bool(np.all(err <= tol))
    print(f"predicted average covariance:\n{predicted}")
    print(f"empirical root-k-scaled covariance at K={K}:\n{S11}")
    print(f"entrywise standard errors:\n{SE11}")
    print(f"averaging check ({ENSEMBLE_REL_TOL:.0%} + {ENSEMBLE_SE_FACTOR:.0f} SE): "
          f"{'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_TOLERANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twoscale",
        description="Predict and validate scaled covariances of coupled slow/fast linear iterations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_mode=False):
        p.add_argument("--config", required=True, help="JSON configuration path")
        p.add_argument("--replicas", "-N", type=int, default=None)
        p.add_argument("--steps", "-K", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--stride", type=int, default=None)
        p.add_argument("--out", default=None, help="output CSV path (default stdout)")
        p.add_argument("--skip-validate", action="store_true")
        if with_mode:
            p.add_argument(
                "--mode",
                choices=["propagate", "ensemble", "normality", "transformed-check"],
                required=True,
            )

    add_common(sub.add_parser("validate", help="check admissibility assumptions"))
    add_common(sub.add_parser("predict", help="solve the limit covariance equations"))
    add_common(sub.add_parser("run", help="propagate, simulate, or cross-check"), with_mode=True)
    avg = sub.add_parser("averaging", help="running-average recovery demonstration")
    avg.add_argument("--config", required=True, help='JSON with "A", "b", "Gamma"')
    avg.add_argument("--replicas", "-N", type=int, default=None)
    avg.add_argument("--steps", "-K", type=int, default=None)
    avg.add_argument("--seed", type=int, default=None)
    avg.add_argument("--jobs", type=int, default=None)
    return parser


_COMMANDS = {
    "validate": cmd_validate,
    "predict": cmd_predict,
    "run": cmd_run,
    "averaging": cmd_averaging,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = _COMMANDS[args.command]
    try:
        return handler(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_IO
    except (KeyError, TypeError, ValueError) as exc:
        print(f"malformed configuration: {exc}", file=sys.stderr)
        return EXIT_IO
    except Diverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except TwoScaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE


if __name__ == "__main__":
    sys.exit(main())
