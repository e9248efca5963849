"""Command-line front end: run or validate experiment configs.

Configs are INI files (configparser syntax, # or ; comments) with one
section per policy:

    [workload]            type, horizon, sla, and type-specific keys
    [run]                 empty_tolerance, stride, profile, assert_lemmas
    [policy <name>]       type = mw | mw_prop | static | po | owm |
                          pg | simple_greedy, plus parameters
    [metrics]             work_difference, sla_window, tau, window_stride,
                          queue_norms
    [output]              dir (overridden by SLASIM_OUTPUT_DIR)

`run` writes one CSV per requested series plus a `summary` file of
key=value lines.  Exit codes: 0 success, 1 config error, 2 runtime
assertion failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from slasim import metrics as metrics_mod
from slasim import offline, policies, workloads
from slasim.core import (
    DEFAULT_EMPTY_TOLERANCE,
    InvariantViolation,
    PolicyParams,
    SimulationTrace,
    SlaVector,
    run as run_simulation,
)

OUTPUT_DIR_ENV = "SLASIM_OUTPUT_DIR"
ONLINE_TYPES = ("mw", "mw_prop", "static", "po", "owm")
OFFLINE_TYPES = ("pg", "simple_greedy")
WORKLOAD_TYPES = ("example1", "synthetic_gamma", "bernoulli_gamma", "trace_csv", "adversary")
WORK_CAP_SLACK = 1e-6


class ConfigError(ValueError):
    """The config file is syntactically or semantically invalid."""


@dataclass
class PolicyConfig:
    name: str
    type: str
    epsilon: Optional[float] = None
    eta: Optional[float] = None
    boost: Optional[float] = None
    capacity: float = 1.0


@dataclass
class ExperimentConfig:
    path: str
    workload_type: str
    horizon: int
    sla: SlaVector
    seed: int = 0
    trace_path: Optional[str] = None
    burst_probability: float = 0.5
    burst_mean: Optional[float] = None
    schedule: tuple = workloads.DEFAULT_SCHEDULE
    empty_tolerance: float = DEFAULT_EMPTY_TOLERANCE
    stride: int = 1
    assert_lemmas: bool = True
    policies: list[PolicyConfig] = field(default_factory=list)
    work_difference: list[tuple[str, str]] = field(default_factory=list)
    sla_window_policy: Optional[str] = None
    tau: int = 500
    window_stride: Optional[int] = None
    queue_norms: bool = True
    output_dir: str = "out"


def _parse_float(raw: str, what: str, errors: list[str]) -> Optional[float]:
    try:
        return float(raw)
    except ValueError:
        errors.append(f"{what}: expected a number, got {raw!r}")
        return None


def _parse_int(raw: str, what: str, errors: list[str]) -> Optional[int]:
    try:
        return int(raw)
    except ValueError:
        errors.append(f"{what}: expected an integer, got {raw!r}")
        return None


def _parse_bool(raw: str, what: str, errors: list[str]) -> Optional[bool]:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    errors.append(f"{what}: expected true/false, got {raw!r}")
    return None


def _parse_schedule(raw: str, errors: list[str]):
    """Period list like 'bulk 2 3; bulk 1 2; uniform 2 3' (1-based users)."""
    schedule = []
    for idx, chunk in enumerate(raw.split(";")):
        parts = chunk.split()
        if len(parts) != 3 or parts[0] not in ("bulk", "uniform"):
            errors.append(
                f"workload schedule period {idx + 1}: expected 'bulk|uniform <a> <b>', got {chunk.strip()!r}"
            )
            continue
        a = _parse_int(parts[1], f"schedule period {idx + 1} user", errors)
        b = _parse_int(parts[2], f"schedule period {idx + 1} user", errors)
        if a is not None and b is not None:
            schedule.append((parts[0], a - 1, b - 1))
    return tuple(schedule)


def parse_config(path: str) -> tuple[Optional[ExperimentConfig], list[str], list[str]]:
    """Read and check a config; returns (config-or-None, errors, warnings)."""
    errors: list[str] = []
    warnings: list[str] = []
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError:
        raise
    except configparser.Error as exc:
        return None, [f"config syntax: {exc}"], []

    if not parser.has_section("workload"):
        return None, ["missing [workload] section"], []
    wl = parser["workload"]
    wl_type = wl.get("type", "").strip()
    if wl_type not in WORKLOAD_TYPES:
        errors.append(
            f"workload type must be one of {', '.join(WORKLOAD_TYPES)}, got {wl_type!r}"
        )
    horizon = _parse_int(wl.get("horizon", "0"), "workload horizon", errors) or 0
    if horizon < 1:
        errors.append(f"workload horizon must be a positive integer, got {horizon}")

    sla = None
    if "sla" not in wl:
        errors.append("workload is missing the sla key (comma-separated shares)")
    else:
        try:
            shares = [float(v) for v in wl["sla"].split(",")]
            sla = SlaVector(np.array(shares))
        except ValueError as exc:
            errors.append(f"workload sla: {exc}")

    seed = _parse_int(wl.get("seed", "0"), "workload seed", errors) or 0
    trace_path = wl.get("path", None)
    burst_p = _parse_float(wl.get("p", "0.5"), "workload p", errors) or 0.5
    burst_mean = (
        _parse_float(wl["mean"], "workload mean", errors) if "mean" in wl else None
    )
    schedule = workloads.DEFAULT_SCHEDULE
    if "schedule" in wl:
        schedule = _parse_schedule(wl["schedule"], errors)

    if sla is not None:
        n = sla.n
        if wl_type == "example1":
            if n != 3:
                errors.append(f"example1 needs exactly 3 users, sla has {n}")
            if horizon % 3 != 0:
                errors.append(f"example1 horizon must be divisible by 3, got {horizon}")
        if wl_type == "synthetic_gamma":
            periods = len(schedule) or 1
            if horizon % periods != 0:
                errors.append(
                    f"synthetic_gamma horizon must be divisible by {periods}, got {horizon}"
                )
            for idx, (_, a, b) in enumerate(schedule):
                if not (0 <= a < n and 0 <= b < n and a != b):
                    errors.append(
                        f"schedule period {idx + 1}: users must be distinct and in 1..{n}"
                    )
        if wl_type == "adversary" and n != 2:
            errors.append(f"adversary workload needs exactly 2 users, sla has {n}")
    if wl_type == "trace_csv" and not trace_path:
        errors.append("trace_csv workload needs a path key")
    if wl_type == "trace_csv" and trace_path and not os.path.exists(trace_path):
        errors.append(f"trace file not found: {trace_path}")

    run_sec = parser["run"] if parser.has_section("run") else {}
    empty_tol = _parse_float(
        run_sec.get("empty_tolerance", str(DEFAULT_EMPTY_TOLERANCE)),
        "run empty_tolerance",
        errors,
    )
    stride = _parse_int(run_sec.get("stride", "1"), "run stride", errors) or 1
    profile = run_sec.get("profile", "debug").strip().lower()
    if profile not in ("debug", "release"):
        errors.append(f"run profile must be debug or release, got {profile!r}")
        profile = "debug"
    assert_lemmas = profile == "debug"  # monitors on by default in debug
    if "assert_lemmas" in run_sec:
        parsed = _parse_bool(run_sec["assert_lemmas"], "run assert_lemmas", errors)
        if parsed is not None:
            assert_lemmas = parsed

    policy_configs: list[PolicyConfig] = []
    for section in parser.sections():
        if not section.startswith("policy "):
            continue
        name = section[len("policy ") :].strip()
        sec = parser[section]
        ptype = sec.get("type", "").strip()
        if not name:
            errors.append(f"[{section}]: policy name is empty")
            continue
        if any(p.name == name for p in policy_configs):
            errors.append(f"duplicate policy name {name!r}")
            continue
        if ptype not in ONLINE_TYPES + OFFLINE_TYPES:
            errors.append(
                f"policy {name}: type must be one of "
                f"{', '.join(ONLINE_TYPES + OFFLINE_TYPES)}, got {ptype!r}"
            )
            continue
        pc = PolicyConfig(name=name, type=ptype)
        if ptype in ("mw", "mw_prop"):
            if "epsilon" not in sec or "eta" not in sec:
                errors.append(f"policy {name}: type {ptype} needs epsilon and eta")
            else:
                pc.epsilon = _parse_float(sec["epsilon"], f"policy {name} epsilon", errors)
                pc.eta = _parse_float(sec["eta"], f"policy {name} eta", errors)
            if "boost" in sec:
                pc.boost = _parse_float(sec["boost"], f"policy {name} boost", errors)
        if ptype in OFFLINE_TYPES and "capacity" in sec:
            cap = _parse_float(sec["capacity"], f"policy {name} capacity", errors)
            if cap is not None:
                pc.capacity = cap
        policy_configs.append(pc)
    if not policy_configs:
        errors.append("no [policy <name>] sections found")

    # Semantic checks needing both SLA and policies.
    if sla is not None:
        for pc in policy_configs:
            if pc.type in ("mw", "mw_prop") and pc.epsilon is not None and pc.eta is not None:
                try:
                    params = PolicyParams(
                        n_users=sla.n, epsilon=pc.epsilon, eta=pc.eta, boost=pc.boost
                    )
                except ValueError as exc:
                    errors.append(f"policy {pc.name}: {exc}")
                    continue
                if not sla.theory_applicable(pc.epsilon):
                    warnings.append(
                        f"policy {pc.name}: some SLA share falls below 2*epsilon/N "
                        f"= {2 * pc.epsilon / sla.n}; the multiplicative-boost "
                        f"guarantees need beta(i) >= 2*epsilon/N"
                    )
            if pc.type in OFFLINE_TYPES and not (0.0 < pc.capacity <= 1.0):
                errors.append(
                    f"policy {pc.name}: capacity must lie in (0, 1], got {pc.capacity}"
                )
    if wl_type == "adversary":
        for pc in policy_configs:
            if pc.type in OFFLINE_TYPES:
                errors.append(
                    f"policy {pc.name}: offline schedulers cannot be driven by the "
                    f"adversary workload (loads adapt to one online policy)"
                )

    met = parser["metrics"] if parser.has_section("metrics") else {}
    known = {p.name for p in policy_configs}
    work_diff: list[tuple[str, str]] = []
    if "work_difference" in met:
        for pair in met["work_difference"].split(","):
            pair = pair.strip()
            if not pair:
                continue
            if ":" not in pair:
                errors.append(f"metrics work_difference: expected a:b pairs, got {pair!r}")
                continue
            first, second = (p.strip() for p in pair.split(":", 1))
            for p in (first, second):
                if p not in known:
                    errors.append(f"metrics work_difference: unknown policy {p!r}")
            work_diff.append((first, second))
    sla_window_policy = met.get("sla_window", "").strip() or None
    if sla_window_policy is not None and sla_window_policy not in known:
        errors.append(f"metrics sla_window: unknown policy {sla_window_policy!r}")
    tau = _parse_int(met.get("tau", "500"), "metrics tau", errors) or 500
    window_stride = (
        _parse_int(met["window_stride"], "metrics window_stride", errors)
        if "window_stride" in met
        else None
    )
    queue_norms = True
    if "queue_norms" in met:
        parsed = _parse_bool(met["queue_norms"], "metrics queue_norms", errors)
        if parsed is not None:
            queue_norms = parsed
    if sla_window_policy is not None:
        if stride != 1:
            errors.append("metrics sla_window needs run stride = 1 (full trace)")
        if horizon >= 1 and not (1 <= tau <= horizon):
            errors.append(f"metrics tau must lie in [1, horizon], got {tau}")
    if wl_type == "adversary" and work_diff:
        warnings.append(
            "work_difference under the adversary workload compares runs with "
            "different realized loads unless the policies coincide"
        )

    out_sec = parser["output"] if parser.has_section("output") else {}
    output_dir = os.environ.get(OUTPUT_DIR_ENV) or out_sec.get("dir", "out")

    if errors or sla is None:
        return None, errors, warnings
    cfg = ExperimentConfig(
        path=path,
        workload_type=wl_type,
        horizon=horizon,
        sla=sla,
        seed=seed,
        trace_path=trace_path,
        burst_probability=burst_p,
        burst_mean=burst_mean,
        schedule=schedule,
        empty_tolerance=empty_tol if empty_tol is not None else DEFAULT_EMPTY_TOLERANCE,
        stride=stride,
        assert_lemmas=assert_lemmas,
        policies=policy_configs,
        work_difference=work_diff,
        sla_window_policy=sla_window_policy,
        tau=tau,
        window_stride=window_stride,
        queue_norms=queue_norms,
        output_dir=output_dir,
    )
    return cfg, errors, warnings


def _policy_echo(cfg: ExperimentConfig) -> list[str]:
    lines = []
    for pc in cfg.policies:
        if pc.type in ("mw", "mw_prop"):
            derived = pc.epsilon**2 / (8.0 * cfg.sla.n)
            if pc.boost is None:
                lines.append(f"policy {pc.name}: boost = {derived!r} (canonical)")
            else:
                lines.append(
                    f"policy {pc.name}: boost = {pc.boost!r} "
                    f"(override; canonical would be {derived!r})"
                )
    return lines


def _build_source(cfg: ExperimentConfig):
    if cfg.workload_type == "example1":
        return workloads.example1_instance(cfg.horizon)
    if cfg.workload_type == "synthetic_gamma":
        return workloads.synthetic_gamma(cfg.sla, cfg.horizon, cfg.seed, cfg.schedule)
    if cfg.workload_type == "bernoulli_gamma":
        return workloads.bernoulli_gamma_fuzz(
            cfg.sla.n, cfg.horizon, cfg.seed, cfg.burst_probability, cfg.burst_mean
        )
    if cfg.workload_type == "trace_csv":
        source = workloads.load_trace_csv(cfg.trace_path)
        if source.n_users != cfg.sla.n:
            raise ConfigError(
                f"trace has {source.n_users} users but sla has {cfg.sla.n}"
            )
        if source.horizon < cfg.horizon:
            raise ConfigError(
                f"trace provides {source.horizon} steps, config asks for {cfg.horizon}"
            )
        return source
    if cfg.workload_type == "adversary":
        return None  # one adversary instance per driven policy
    raise ConfigError(f"unhandled workload type {cfg.workload_type!r}")


def _instantiate(pc: PolicyConfig, cfg: ExperimentConfig):
    params = None
    if pc.type in ("mw", "mw_prop"):
        params = PolicyParams(
            n_users=cfg.sla.n,
            epsilon=pc.epsilon,
            eta=pc.eta,
            boost=pc.boost,
            empty_tolerance=cfg.empty_tolerance,
        )
    return policies.make_policy(
        pc.type, sla=cfg.sla, params=params, monitor_lemmas=cfg.assert_lemmas
    )


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_series(path: str, report: metrics_mod.SeriesReport, n_users: int = 0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if report.values.ndim == 1:
            fh.write("t,value\n")
            for t, v in zip(report.steps, report.values):
                fh.write(f"{t},{_format(float(v))}\n")
        else:
            names = ",".join(f"user{i + 1}" for i in range(report.values.shape[1]))
            fh.write(f"t,{names}\n")
            for t, row in zip(report.steps, report.values):
                fh.write(str(t) + "," + ",".join(_format(float(v)) for v in row) + "\n")


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every configured policy, write CSVs and the summary file."""
    started = time.perf_counter()
    os.makedirs(cfg.output_dir, exist_ok=True)
    shared_source = _build_source(cfg)
    shared_loads = shared_source.matrix[: cfg.horizon] if shared_source is not None else None

    traces: dict[str, SimulationTrace] = {}
    realized: dict[str, np.ndarray] = {}
    summary: dict[str, object] = {
        "workload": cfg.workload_type,
        "horizon": cfg.horizon,
        "n_users": cfg.sla.n,
        "seed": cfg.seed,
    }

    for pc in cfg.policies:
        if pc.type in OFFLINE_TYPES:
            if pc.type == "pg":
                trace = offline.proportional_greedy(
                    shared_loads, cfg.sla, pc.capacity, stride=cfg.stride
                )
            else:
                trace = offline.simple_greedy(shared_loads, pc.capacity, stride=cfg.stride)
            loads_used = shared_loads
        else:
            if cfg.workload_type == "adversary":
                source = workloads.QueueAdversary(tol=cfg.empty_tolerance)
            else:
                source = shared_source
            policy = _instantiate(pc, cfg)
            trace = run_simulation(
                policy,
                source,
                cfg.horizon,
                empty_tolerance=cfg.empty_tolerance,
                stride=cfg.stride,
            )
            if cfg.workload_type == "adversary":
                loads_used = None  # reconstruct from the trace when unthinned
                if trace.is_full:
                    loads_used = trace.load
                summary[f"policy.{pc.name}.adversary_phases"] = len(source.phase_log)
            else:
                loads_used = shared_loads
        traces[pc.name] = trace
        if loads_used is not None:
            realized[pc.name] = loads_used

        prefix = f"policy.{pc.name}"
        summary[f"{prefix}.type"] = pc.type
        summary[f"{prefix}.total_work"] = float(trace.total_work.sum())
        summary[f"{prefix}.final_queue_l1"] = float(trace.final_queue.sum())
        summary[f"{prefix}.final_queue_l2"] = float(np.sqrt((trace.final_queue**2).sum()))

    if shared_loads is not None:
        shared_opt = offline.offline_optimal_value(shared_loads, 0.0)
        summary["offline_optimal_eps0"] = shared_opt
    for pc in cfg.policies:
        loads_used = realized.get(pc.name)
        if loads_used is None:
            continue
        opt0 = offline.offline_optimal_value(loads_used, 0.0)
        if cfg.workload_type == "adversary":
            summary[f"policy.{pc.name}.offline_optimal_eps0"] = opt0
            summary[f"policy.{pc.name}.offline_gap"] = opt0 - float(
                traces[pc.name].total_work.sum()
            )
        if pc.type in ("mw", "mw_prop"):
            summary[f"policy.{pc.name}.offline_optimal_rest"] = (
                offline.offline_optimal_value(loads_used, pc.epsilon)
            )
        total = float(traces[pc.name].total_work.sum())
        if total > opt0 + WORK_CAP_SLACK:
            raise InvariantViolation(
                f"policy {pc.name} reports {total} work, above the offline optimum {opt0}"
            )

    for name, trace in traces.items():
        _write_series(
            os.path.join(cfg.output_dir, f"cumulative_work_{name}.csv"),
            metrics_mod.cumulative_work(trace),
        )
    if cfg.queue_norms:
        for name, trace in traces.items():
            report = metrics_mod.queue_two_norm(trace)
            _write_series(os.path.join(cfg.output_dir, f"queue_two_norm_{name}.csv"), report)
            summary[f"policy.{name}.queue_l2_final"] = report.metadata["final"]
            summary[f"policy.{name}.queue_l2_time_avg"] = report.metadata["time_average"]
    for a, b in cfg.work_difference:
        report = metrics_mod.work_difference(traces[a], traces[b])
        _write_series(os.path.join(cfg.output_dir, f"work_difference_{a}_{b}.csv"), report)
        summary[f"work_difference.{a}.{b}.final"] = report.metadata["final"]
    if cfg.sla_window_policy is not None:
        trace = traces[cfg.sla_window_policy]
        stats = metrics_mod.sla_window_stats(trace, cfg.sla, cfg.tau, cfg.window_stride)
        report = metrics_mod.SeriesReport(
            name=f"sla_window[{cfg.sla_window_policy}]",
            steps=stats.starts,
            values=stats.gaps,
        )
        _write_series(
            os.path.join(cfg.output_dir, f"sla_window_{cfg.sla_window_policy}.csv"),
            report,
            n_users=cfg.sla.n,
        )
        prefix = f"policy.{cfg.sla_window_policy}.sla_window"
        summary[f"{prefix}.tau"] = stats.tau
        summary[f"{prefix}.stride"] = stats.stride
        for i in range(cfg.sla.n):
            summary[f"{prefix}.user{i + 1}.min"] = float(stats.mins[i])
            summary[f"{prefix}.user{i + 1}.max"] = float(stats.maxs[i])
            summary[f"{prefix}.user{i + 1}.mean"] = float(stats.means[i])
            summary[f"{prefix}.user{i + 1}.std"] = float(stats.stds[i])

    summary["wallclock_seconds"] = time.perf_counter() - started
    with open(os.path.join(cfg.output_dir, "summary"), "w", encoding="utf-8") as fh:
        for key, value in summary.items():
            fh.write(f"{key}={_format(value)}\n")
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="slasim", description="Simulate SLA-aware resource-sharing policies."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config")
    val_p = sub.add_parser("validate", help="check a config without running it")
    val_p.add_argument("config")
    args = parser.parse_args(argv)

    try:
        cfg, errors, warnings = parse_config(args.config)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    for line in warnings:
        print(f"warning: {line}")
    if errors:
        for line in errors:
            print(f"error: {line}", file=sys.stderr)
        return 1

    if args.command == "validate":
        for line in _policy_echo(cfg):
            print(line)
        print(f"ok: {args.config}")
        return 0

    try:
        summary = run_experiment(cfg)
    except (ConfigError, workloads.TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InvariantViolation as exc:
        print(f"assertion failed: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    print(f"wrote {cfg.output_dir}/summary ({len(summary)} keys)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
