"""Experiment runner: config parsing, seed fan-out over (procedure x M x seed)
cells, CSV trace emission, summary/manifest JSON, and worker-pool execution.

Per-run randomness is derived from (base seed, seed index) only, never from
the procedure or the budget, so runs with the same seed index see identical
outcome sequences across cells and results are independent of worker
scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .baselines import LimitedAdviceProcedure, OracleProcedure, RoundRobinProcedure
from .meta import Engine, MlcbProcedure, RunTrace, derive_streams
from .metrics import loglog_slope, mean_and_band
from .confidence import ConfidenceConfig
from .presets import (
    PRESET_VERSION,
    build_environment,
    build_experts,
    expert_defaults,
    preset_names,
)

SCHEMA_VERSION = "1"
CSV_COLUMNS = [
    "run_id",
    "t",
    "procedure",
    "M",
    "seed",
    "advisor",
    "training_set",
    "loss",
    "cum_loss",
    "cum_realized_regret",
    "cum_pseudo_regret",
    "cum_topm_regret",
    "n_counts",
]
PROCEDURES = ("m-lcb", "round-robin", "limited-advice", "oracle")
OUTPUT_ROOT_ENV = "MLCB_OUT_ROOT"


def make_procedure(name: str):
    if name == "m-lcb":
        return MlcbProcedure()
    if name == "round-robin":
        return RoundRobinProcedure()
    if name == "limited-advice":
        return LimitedAdviceProcedure()
    if name == "oracle":
        return OracleProcedure()
    raise KeyError(name)


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment grid."""

    name: str
    environment: str
    env_params: dict = field(default_factory=dict)
    expert_params: dict = field(default_factory=dict)
    procedures: list[str] = field(default_factory=lambda: ["m-lcb"])
    M: list[int] = field(default_factory=lambda: [1])
    T: int = 1000
    delta: float = 0.1
    scheme: str = "standard"
    scale: float = 1.0
    base_seed: int = 0
    seed_count: int = 1
    record: str = "compact"
    track_coverage: bool = False
    track_delta: bool = False
    output: Optional[str] = None

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        env = raw.get("environment", {}) or {}
        conf = raw.get("confidence", {}) or {}
        seeds = raw.get("seeds", {}) or {}
        track = raw.get("track", {}) or {}
        m_raw = raw.get("M", 1)
        proc_raw = raw.get("procedures", raw.get("procedure", "m-lcb"))
        return ExperimentConfig(
            name=raw.get("name", "experiment"),
            environment=env.get("preset", ""),
            env_params=dict(env.get("params", {}) or {}),
            expert_params=dict(raw.get("experts", {}) or {}),
            procedures=[proc_raw] if isinstance(proc_raw, str) else list(proc_raw),
            M=[m_raw] if isinstance(m_raw, int) else [int(m) for m in m_raw],
            T=int(raw.get("T", 1000)),
            delta=float(raw.get("delta", 0.1)),
            scheme=conf.get("scheme", "standard"),
            scale=float(conf.get("scale", 1.0)),
            base_seed=int(seeds.get("base", 0)),
            seed_count=int(seeds.get("count", 1)),
            record=raw.get("record", "compact"),
            track_coverage=bool(track.get("coverage", False)),
            track_delta=bool(track.get("delta", False)),
            output=raw.get("output"),
        )

    def resolved(self) -> dict:
        return {
            "name": self.name,
            "environment": {"preset": self.environment, "params": self.env_params},
            "experts": self.expert_params,
            "procedures": list(self.procedures),
            "M": list(self.M),
            "T": self.T,
            "delta": self.delta,
            "confidence": {"scheme": self.scheme, "scale": self.scale},
            "seeds": {"base": self.base_seed, "count": self.seed_count},
            "record": self.record,
            "track": {"coverage": self.track_coverage, "delta": self.track_delta},
            "output": self.output,
        }


def _probe_K(cfg: ExperimentConfig) -> Optional[int]:
    try:
        env = build_environment(cfg.environment, cfg.env_params, seed=0)
    except Exception:
        return None
    return env.K


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """Diagnostics for every violated constraint; empty list means valid."""
    diags = []
    if cfg.environment not in preset_names():
        diags.append(
            f"environment.preset: unknown preset {cfg.environment!r}; "
            f"available: {', '.join(preset_names())}"
        )
        return diags
    try:
        K = _probe_K(cfg)
    except Exception as exc:  # pragma: no cover - defensive
        K = None
        diags.append(f"environment.params: {exc}")
    if K is None:
        try:
            build_environment(cfg.environment, cfg.env_params, seed=0)
        except Exception as exc:
            diags.append(f"environment.params: {exc}")
            return diags
    for m in cfg.M:
        if K is not None and not 1 <= m <= K:
            diags.append(f"M: M must satisfy 1 <= M <= K (got M={m}, K={K})")
    if cfg.T < 0:
        diags.append("T: must be >= 0")
    if not 0.0 < cfg.delta < 1.0:
        diags.append("delta: delta in (0,1)")
    if cfg.scheme not in ("standard", "standard-tight", "self-normalized"):
        diags.append(f"confidence.scheme: unknown scheme {cfg.scheme!r}")
    if cfg.scale < 0:
        diags.append("confidence.scale: must be >= 0")
    for p in cfg.procedures:
        if p not in PROCEDURES:
            diags.append(f"procedures: unknown procedure {p!r}; available: {PROCEDURES}")
    if cfg.seed_count < 1:
        diags.append("seeds.count: must be >= 1")
    if cfg.record not in ("compact", "full"):
        diags.append(f"record: unknown mode {cfg.record!r}")
    return diags


def run_cell(cfg: ExperimentConfig, procedure: str, M: int, seed_index: int) -> RunTrace:
    """One fully deterministic run of a grid cell."""
    env_seed, streams = derive_streams(
        cfg.base_seed, seed_index, K=_env_K(cfg)
    )
    env = build_environment(cfg.environment, cfg.env_params, seed=np.random.default_rng(env_seed))
    experts = build_experts(env, {**expert_defaults(cfg.environment), **cfg.expert_params})
    conf = ConfidenceConfig(delta=cfg.delta, K=env.K, scheme=cfg.scheme, scale=cfg.scale)
    engine = Engine(
        env,
        experts,
        make_procedure(procedure),
        M,
        conf,
        streams,
        record=cfg.record,
        track_bounds=cfg.track_coverage and cfg.record == "full",
        track_coverage=cfg.track_coverage,
        track_delta=cfg.track_delta,
    )
    trace = engine.run(cfg.T)
    trace.meta["seed_index"] = seed_index
    trace.meta["base_seed"] = cfg.base_seed
    return trace


# run_cell is the single-run entry point; the grid runner fans it out
run_horizon = run_cell

_K_CACHE: dict[str, int] = {}


def _env_K(cfg: ExperimentConfig) -> int:
    key = json.dumps({"p": cfg.environment, "a": cfg.env_params}, sort_keys=True)
    if key not in _K_CACHE:
        _K_CACHE[key] = build_environment(cfg.environment, cfg.env_params, seed=0).K
    return _K_CACHE[key]


def cell_id(procedure: str, M: int, seed_index: int) -> str:
    return f"{procedure}_M{M}_s{seed_index}"


def trace_csv_text(trace: RunTrace, procedure: str, M: int, seed_index: int) -> str:
    """Render one run as an RFC-4180 CSV string (checkpoint rows)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    rid = cell_id(procedure, M, seed_index)
    cps = trace.checkpoints.tolist() if trace.checkpoints is not None else []
    for i, t in enumerate(cps):
        realized = (
            repr(float(trace.cum_realized_regret[i]))
            if trace.cum_realized_regret is not None
            else ""
        )
        pseudo = (
            repr(float(trace.cum_pseudo_regret[i]))
            if trace.cum_pseudo_regret is not None
            else ""
        )
        topm = (
            repr(float(trace.cum_topm_regret[i]))
            if trace.cum_topm_regret is not None
            else ""
        )
        writer.writerow(
            [
                rid,
                t,
                procedure,
                M,
                seed_index,
                trace.cp_advisors[i],
                ";".join(map(str, trace.cp_sets[i])),
                repr(float(trace.cp_round_losses[i])),
                repr(float(trace.cum_loss[i])),
                realized,
                pseudo,
                topm,
                ";".join(map(str, trace.n_snapshots[i])),
            ]
        )
    return buf.getvalue()


def _cell_payload(trace: RunTrace) -> dict:
    """The part of a trace the summary aggregation needs."""
    return {
        "checkpoints": trace.checkpoints.tolist(),
        "cum_realized": None
        if trace.cum_realized_regret is None
        else trace.cum_realized_regret.tolist(),
        "cum_pseudo": None
        if trace.cum_pseudo_regret is None
        else trace.cum_pseudo_regret.tolist(),
        "cum_topm": None
        if trace.cum_topm_regret is None
        else trace.cum_topm_regret.tolist(),
        "advisor_counts": trace.advisor_counts,
        "selection_counts": trace.selection_counts,
        "final_n": trace.final_n,
        "rounds": trace.rounds,
        "coverage_violated": trace.coverage_violated,
        "delta_violations": trace.delta_violations,
        "l_star": trace.l_star,
        "l_star_table": trace.l_star_table,
    }


def _run_cell_job(args) -> tuple[str, dict, float]:
    cfg_raw, procedure, M, seed_index, out_dir = args
    cfg = ExperimentConfig.from_dict(cfg_raw)
    started = time.perf_counter()
    trace = run_cell(cfg, procedure, M, seed_index)
    cid = cell_id(procedure, M, seed_index)
    if out_dir is not None:
        path = os.path.join(out_dir, f"trace_{cid}.csv")
        with open(path, "w", newline="") as fh:
            fh.write(trace_csv_text(trace, procedure, M, seed_index))
    return cid, _cell_payload(trace), time.perf_counter() - started


def summarize(cfg: ExperimentConfig, payload_by_cell: dict[str, dict]) -> dict:
    """Merge per-run payloads into the summary document (sorted, deterministic)."""
    groups: dict[tuple[str, int], list[dict]] = {}
    for procedure in cfg.procedures:
        for m in cfg.M:
            groups[(procedure, m)] = []
    for cid, payload in sorted(payload_by_cell.items()):
        procedure, m_tag, _ = cid.rsplit("_", 2)
        groups[(procedure, int(m_tag[1:]))].append(payload)

    cells = []
    for (procedure, m), runs in sorted(groups.items()):
        if not runs:
            continue
        entry: dict = {
            "procedure": procedure,
            "M": m,
            "runs": len(runs),
            "checkpoints": runs[0]["checkpoints"],
        }
        for key, label in (
            ("cum_realized", "realized_regret"),
            ("cum_pseudo", "pseudo_regret"),
            ("cum_topm", "topm_regret"),
        ):
            if runs[0][key] is None:
                continue
            mean, std, lo, hi = mean_and_band([np.asarray(r[key]) for r in runs])
            entry[label] = {
                "mean": mean.tolist(),
                "std": std.tolist(),
                "band_lower": lo.tolist(),
                "band_upper": hi.tolist(),
            }
            if label == "realized_regret" and cfg.T >= 40:
                try:
                    entry["realized_slope"] = loglog_slope(
                        mean,
                        (max(cfg.T // 100, 10), cfg.T),
                        times=np.asarray(runs[0]["checkpoints"]),
                    )
                except ValueError:
                    entry["realized_slope"] = None
        K = len(runs[0]["advisor_counts"])
        adv = np.mean([r["advisor_counts"] for r in runs], axis=0)
        sel = np.mean([r["selection_counts"] for r in runs], axis=0)
        fin = np.mean([r["final_n"] for r in runs], axis=0)
        entry["advisor_histogram"] = adv.tolist()
        entry["selection_histogram"] = sel.tolist()
        entry["budget_histogram"] = fin.tolist()
        total = float(fin.sum())
        entry["budget_fraction"] = (fin / total).tolist() if total else [0.0] * K
        cov = [r["coverage_violated"] for r in runs if r["coverage_violated"] is not None]
        if cov:
            entry["coverage"] = {
                "runs": len(cov),
                "violated_runs": int(sum(cov)),
                "rate": float(sum(cov)) / len(cov),
            }
        cells.append(entry)

    first = next(iter(payload_by_cell.values()), {})
    return {
        "schema_version": SCHEMA_VERSION,
        "preset_version": PRESET_VERSION,
        "name": cfg.name,
        "environment": {"preset": cfg.environment, "params": cfg.env_params},
        "T": cfg.T,
        "delta": cfg.delta,
        "l_star": first.get("l_star"),
        "l_star_table": first.get("l_star_table"),
        "cells": cells,
    }


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(
        json.dumps(resolved, sort_keys=True).encode()
    ).hexdigest()


def run_experiment(
    config: dict | str,
    *,
    out_dir: Optional[str] = None,
    threads: int = 1,
    dry_run: bool = False,
    overrides: Optional[dict] = None,
) -> tuple[int, dict]:
    """Execute every (procedure x M x seed) cell of a config.

    Returns (exit status, artifact index).  Invalid configs exit nonzero with
    field diagnostics; cell failures are recorded in the manifest while the
    remaining cells complete.
    """
    if isinstance(config, str):
        with open(config) as fh:
            raw = yaml.safe_load(fh) or {}
    else:
        raw = dict(config)
    if overrides:
        raw.update(overrides)
    cfg = ExperimentConfig.from_dict(raw)
    diags = validate_config(cfg)
    if diags:
        for d in diags:
            print(f"config error: {d}")
        return 1, {"diagnostics": diags}

    resolved = cfg.resolved()
    if dry_run:
        print(json.dumps(resolved, indent=2, sort_keys=True))
        return 0, {"resolved": resolved}

    root = out_dir or cfg.output or os.environ.get(OUTPUT_ROOT_ENV, "out")
    run_dir = os.path.join(root, cfg.name)
    os.makedirs(run_dir, exist_ok=True)

    jobs = [
        (raw_for_worker(resolved), procedure, m, s, run_dir)
        for procedure in cfg.procedures
        for m in cfg.M
        for s in range(cfg.seed_count)
    ]
    payloads: dict[str, dict] = {}
    statuses = []
    if threads <= 1:
        for job in jobs:
            cid = cell_id(job[1], job[2], job[3])
            try:
                res = _run_cell_job(job)
                payloads[res[0]] = res[1]
                statuses.append(
                    {"cell": cid, "status": "ok", "seconds": round(res[2], 3)}
                )
            except Exception as exc:
                statuses.append({"cell": cid, "status": "error", "error": str(exc)})
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [(job, pool.submit(_run_cell_job, job)) for job in jobs]
            for job, fut in futures:
                cid = cell_id(job[1], job[2], job[3])
                try:
                    res = fut.result()
                    payloads[res[0]] = res[1]
                    statuses.append(
                        {"cell": cid, "status": "ok", "seconds": round(res[2], 3)}
                    )
                except Exception as exc:
                    statuses.append({"cell": cid, "status": "error", "error": str(exc)})

    summary = summarize(cfg, payloads)
    summary_path = os.path.join(run_dir, "summary.json")
    with open(summary_path, "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)

    manifest = {
        "tool": "mlcb",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "preset_version": PRESET_VERSION,
        "config_sha256": config_hash(resolved),
        "resolved_config": resolved,
        "cells": sorted(statuses, key=lambda s: s["cell"]),
    }
    manifest_path = os.path.join(run_dir, "manifest.json")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)

    failed = [s for s in statuses if s["status"] != "ok"]
    return (0 if not failed else 2), {
        "summary": summary_path,
        "manifest": manifest_path,
        "run_dir": run_dir,
        "failed_cells": [s["cell"] for s in failed],
    }


def raw_for_worker(resolved: dict) -> dict:
    out = dict(resolved)
    out.pop("output", None)
    return out


def oracle_table_text(cfg: ExperimentConfig, n_samples: int = 1_000_000) -> str:
    """Monte-Carlo (or analytic) optimal-loss table for the config's environment."""
    env = build_environment(cfg.environment, cfg.env_params, seed=0)
    lines = ["k,l_star,stderr"]
    for k in range(env.K):
        exact = env.oracle_optimum(k)
        if exact is not None:
            lines.append(f"{k},{exact!r},0.0")
        elif hasattr(env, "estimate_optimum"):
            est, se = env.estimate_optimum(k, n_samples=n_samples, seed=k)
            lines.append(f"{k},{est!r},{se!r}")
        else:
            lines.append(f"{k},,")
    return "\n".join(lines) + "\n"
