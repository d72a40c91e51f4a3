"""Batch entry point.

Parses a flat key = value experiment config, runs one simulation per seed,
and writes machine-readable results:

    runs/<run_id>.rounds.jsonl   round-by-round log (source of truth)
    runs/<run_id>.summary.json   metrics derived from the round log
    runs/<run_id>.cumobj.dat     round vs cumulative global objective
    runs/<run_id>.entropy.dat    round vs decision entropy
    suite.csv                    one row per (config, seed)

Every number in a summary is recomputed from the serialized round log, so
the log alone reproduces the report. Round logs are byte-identical across
reruns and across worker counts.

Exit codes: 0 success, 1 configuration error, 2 at least one run failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics, simplex
from .datasets import SyntheticDataSpec
from .errors import ConfigError, DegenerateSubsetError
from .federation import ADAPTIVE_DEVICE, ADAPTIVE_SILO, FederationConfig, run_federation
from .transform import CdfKind, CdfSpec, Setting

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "schema_version",
    "run_id",
    "method",
    "k",
    "t_rounds",
    "c",
    "seed",
    "avg_accuracy_pct",
    "worst10_accuracy_pct",
    "best10_accuracy_pct",
    "gini_x100",
    "accuracy_parity_gap_pct",
    "regret",
    "regret_vs_uniform_observed",
    "status",
]

_INT_KEYS = {"k", "t_rounds", "e", "b", "lr_decay_step", "seed"}
_FLOAT_KEYS = {"c", "lr", "lr_decay", "weight_decay", "qfedavg_q", "term_lambda", "propfair_m", "afl_q"}
_STR_KEYS = {"method", "setting"}
_CDF_KEYS = {"cdf.kind", "cdf.scale", "cdf.shape"}
_DATA_INT_KEYS = {
    "data.input_dim",
    "data.num_classes",
    "data.samples_per_client_mean",
    "data.samples_per_client_spread",
}
_DATA_FLOAT_KEYS = {"data.dirichlet_concentration", "data.feature_shift"}
_SUITE_KEYS = {"seeds", "out"}
_REQUIRED = ("k", "t_rounds", "method", "setting")


@dataclass
class ExperimentSuite:
    """One run per entry of ``configs`` (same experiment, distinct seeds)."""

    configs: list
    out_dir: Path

    def __post_init__(self):
        if not self.configs:
            raise ConfigError("configs", "config list is empty")
        seeds = [cfg.seed for cfg in self.configs]
        if len(set(seeds)) != len(seeds):
            raise ConfigError("seeds", "duplicate (config, seed) pair")


def _parse_number(field, raw, cast):
    try:
        return cast(raw)
    except ValueError:
        kind = "an integer" if cast is int else "a number"
        raise ConfigError(field, f"expected {kind}, got {raw!r}") from None


def _parse_seeds(field, raw):
    try:
        seeds = [int(s) for s in str(raw).split(",") if s.strip() != ""]
    except ValueError:
        raise ConfigError(field, f"expected comma-separated integers, got {raw!r}") from None
    if not seeds:
        raise ConfigError(field, "needs at least one seed")
    return seeds


def read_key_values(path: Path) -> dict:
    """Read the flat ``key = value`` schema ('#' starts a comment)."""
    pairs = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path.name}:{lineno}", f"expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if key in pairs:
            raise ConfigError(key, "duplicate key")
        pairs[key] = value
    return pairs


def parse_config(path, out_dir=None, seeds=None) -> ExperimentSuite:
    """Validate a config file into a suite of per-seed run configs.

    ``out_dir`` and ``seeds`` override the file's optional ``out`` and
    ``seeds`` entries; the file's ``seed`` is the single-run fallback.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError("config", f"no such file: {path}")
    pairs = read_key_values(path)

    for key in _REQUIRED:
        if key not in pairs:
            raise ConfigError(key, "required field is missing")
    known = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _CDF_KEYS | _DATA_INT_KEYS | _DATA_FLOAT_KEYS | _SUITE_KEYS
    for key in pairs:
        if key not in known:
            raise ConfigError(key, "unknown field")

    kwargs = {}
    for key in _INT_KEYS & pairs.keys():
        kwargs[key] = _parse_number(key, pairs[key], int)
    for key in _FLOAT_KEYS & pairs.keys():
        kwargs[key] = _parse_number(key, pairs[key], float)
    for key in _STR_KEYS & pairs.keys():
        kwargs[key] = pairs[key]

    if kwargs.get("c", 1.0) <= 0 or kwargs.get("c", 1.0) > 1:
        raise ConfigError("c", "c must be in (0,1]")
    if kwargs["setting"] not in [s.value for s in Setting]:
        raise ConfigError("setting", f"must be one of {[s.value for s in Setting]}")

    cdf_kwargs = {}
    if "cdf.kind" in pairs:
        if pairs["cdf.kind"] not in [k.value for k in CdfKind]:
            raise ConfigError("cdf.kind", f"must be one of {[k.value for k in CdfKind]}")
        cdf_kwargs["kind"] = CdfKind(pairs["cdf.kind"])
    if "cdf.scale" in pairs:
        cdf_kwargs["scale"] = _parse_number("cdf.scale", pairs["cdf.scale"], float)
    if "cdf.shape" in pairs:
        cdf_kwargs["shape"] = _parse_number("cdf.shape", pairs["cdf.shape"], float)
    kwargs["cdf"] = CdfSpec(**cdf_kwargs)

    data_kwargs = {}
    for key in _DATA_INT_KEYS & pairs.keys():
        data_kwargs[key.split(".", 1)[1]] = _parse_number(key, pairs[key], int)
    for key in _DATA_FLOAT_KEYS & pairs.keys():
        data_kwargs[key.split(".", 1)[1]] = _parse_number(key, pairs[key], float)
    kwargs["data"] = SyntheticDataSpec(**data_kwargs)

    if seeds is None:
        if "seeds" in pairs:
            seeds = _parse_seeds("seeds", pairs["seeds"])
        else:
            seeds = [kwargs.get("seed", 0)]
    kwargs.pop("seed", None)
    if out_dir is None:
        out_dir = pairs.get("out", "results")

    configs = [FederationConfig(seed=seed, **kwargs) for seed in seeds]
    return ExperimentSuite(configs=configs, out_dir=Path(out_dir))


def _json_line(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _meta_line(cfg: FederationConfig) -> dict:
    raw = dataclasses.asdict(cfg)
    raw["setting"] = cfg.setting.value
    raw["cdf"]["kind"] = cfg.cdf.kind.value
    return {"type": "meta", "schema": SCHEMA_VERSION, "config": raw}


def run_log_lines(result) -> list:
    """Serialize a run into its round-log lines (meta, rounds, client eval)."""
    lines = [_meta_line(result.config)]
    lines.extend(rec.to_dict() for rec in result.records)
    lines.append({"type": "client_eval", "accuracy": [float(a) for a in result.client_accuracy]})
    return lines


def _subset_loss(decision_prev, sampled, observed):
    """Decision loss of the prev decision renormalized over the sampled set."""
    try:
        weights = simplex.normalize_subset(np.asarray(decision_prev), sampled)
    except DegenerateSubsetError:
        weights = simplex.uniform(len(sampled))
    return -float(np.log1p(weights @ observed))


def summary_from_log(lines: list) -> dict:
    """Recompute every reported number from serialized round-log lines."""
    meta = lines[0]["config"]
    rounds = [line for line in lines if line["type"] == "round"]
    accuracy = np.array(next(line for line in lines if line["type"] == "client_eval")["accuracy"])
    k, t = meta["k"], meta["t_rounds"]

    decisions_prev = np.array([r["decision_prev"] for r in rounds])
    responses = np.array([r["response"] for r in rounds])
    estimated = any(r["response_estimated"] for r in rounds)
    regret = metrics.regret(decisions_prev, responses)

    observed_vs_uniform = 0.0
    cumobj = 0.0
    for r in rounds:
        sampled = np.asarray(r["sampled"], dtype=int)
        response = np.asarray(r["response"])
        losses = np.asarray(r["losses"])
        if r["response_estimated"]:
            # Invert the estimate: imputed value is the full-vector mean.
            rbar = response.mean()
            c_incl = sampled.size / k
            observed = c_incl * (response[sampled] - rbar) + rbar
        else:
            observed = response[sampled]
        observed_vs_uniform += _subset_loss(r["decision_prev"], sampled, observed)
        observed_vs_uniform -= -float(np.log1p(simplex.uniform(sampled.size) @ observed))
        cumobj += float(np.asarray(r["decision_prev"])[sampled] @ losses)

    method = meta["method"]
    bound = None
    if method == ADAPTIVE_SILO:
        l_inf = (1.0 / k) / 1.0
        bound = 2.0 * l_inf * k * (1.0 + np.log(1.0 + t / (16.0 * k)))
    elif method == ADAPTIVE_DEVICE:
        m = len(rounds[0]["sampled"])
        c_incl = m / k
        l_inf_dr = c_incl + 2.0
        bound = 2.0 * l_inf_dr * np.sqrt(t * np.log(k))

    worst, best = metrics.worst_best(accuracy, 0.1)
    last = rounds[-1]
    return {
        "schema": SCHEMA_VERSION,
        "method": method,
        "k": k,
        "t_rounds": t,
        "c": meta["c"],
        "seed": meta["seed"],
        "avg_accuracy": float(accuracy.mean()),
        "worst10_accuracy": worst,
        "best10_accuracy": best,
        "worst_accuracy": float(accuracy.min()),
        "gini": metrics.gini(accuracy) if accuracy.sum() > 0 else None,
        "accuracy_parity_gap": metrics.accuracy_parity_gap(accuracy),
        "regret": float(regret),
        "regret_responses_estimated": estimated,
        "regret_vs_uniform_observed": float(observed_vs_uniform),
        "regret_bound": None if bound is None else float(bound),
        "bound_satisfied": None if bound is None else bool(regret <= bound),
        "cumulative_objective": float(cumobj),
        "final_decision_loss": float(last["decision_loss"]),
        "final_system_loss": -float(last["decision_loss"]),
        "final_decision_entropy": metrics.decision_entropy(np.asarray(last["decision"])),
        "per_client_accuracy": [float(a) for a in accuracy],
        "config": meta,
        "error": None,
    }


def _plot_files(lines: list) -> tuple[str, str]:
    rounds = [line for line in lines if line["type"] == "round"]
    cum = 0.0
    cum_rows, ent_rows = [], []
    for r in rounds:
        sampled = np.asarray(r["sampled"], dtype=int)
        cum += float(np.asarray(r["decision_prev"])[sampled] @ np.asarray(r["losses"]))
        cum_rows.append(f"{r['round']} {cum!r}")
        ent_rows.append(f"{r['round']} {metrics.decision_entropy(np.asarray(r['decision']))!r}")
    header = f"# fedfair schema={SCHEMA_VERSION} columns=round,"
    return (
        header + "cumulative_objective\n" + "\n".join(cum_rows) + "\n",
        header + "decision_entropy\n" + "\n".join(ent_rows) + "\n",
    )


def run_id_for(cfg: FederationConfig) -> str:
    return f"{cfg.method.replace('-', '_')}_seed{cfg.seed}"


def _execute_one(cfg: FederationConfig, runs_dir: Path, workers: int) -> dict:
    run_id = run_id_for(cfg)
    row = {
        "schema_version": SCHEMA_VERSION,
        "run_id": run_id,
        "method": cfg.method,
        "k": cfg.k,
        "t_rounds": cfg.t_rounds,
        "c": cfg.c,
        "seed": cfg.seed,
    }
    try:
        result = run_federation(cfg, workers=workers)
        lines = run_log_lines(result)
        (runs_dir / f"{run_id}.rounds.jsonl").write_text(
            "\n".join(_json_line(line) for line in lines) + "\n"
        )
        summary = summary_from_log(lines)
        (runs_dir / f"{run_id}.summary.json").write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n"
        )
        cumobj_text, entropy_text = _plot_files(lines)
        (runs_dir / f"{run_id}.cumobj.dat").write_text(cumobj_text)
        (runs_dir / f"{run_id}.entropy.dat").write_text(entropy_text)
        logger.info("run %s finished in %.2fs", run_id, result.runtime)
        row.update(
            avg_accuracy_pct=round(100 * summary["avg_accuracy"], 6),
            worst10_accuracy_pct=round(100 * summary["worst10_accuracy"], 6),
            best10_accuracy_pct=round(100 * summary["best10_accuracy"], 6),
            gini_x100=None if summary["gini"] is None else round(100 * summary["gini"], 6),
            accuracy_parity_gap_pct=round(100 * summary["accuracy_parity_gap"], 6),
            regret=summary["regret"],
            regret_vs_uniform_observed=summary["regret_vs_uniform_observed"],
            status="ok",
        )
    except Exception as err:  # noqa: BLE001 - failures must land in the report
        logger.error("run %s failed: %s", run_id, err)
        (runs_dir / f"{run_id}.summary.json").write_text(
            json.dumps({"schema": SCHEMA_VERSION, "run_id": run_id, "error": str(err)}, indent=2) + "\n"
        )
        row.update(
            avg_accuracy_pct=None, worst10_accuracy_pct=None, best10_accuracy_pct=None,
            gini_x100=None, accuracy_parity_gap_pct=None, regret=None,
            regret_vs_uniform_observed=None, status=f"failed: {err}",
        )
    return row


def run_suite(suite: ExperimentSuite, jobs: int = 1) -> int:
    """Execute every (config, seed) run; returns the process exit code."""
    runs_dir = suite.out_dir / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda cfg: _execute_one(cfg, runs_dir, jobs), suite.configs))
    else:
        rows = [_execute_one(cfg, runs_dir, 1) for cfg in suite.configs]

    with (suite.out_dir / "suite.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return 0 if all(row["status"] == "ok" for row in rows) else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedfair",
        description="Run fairness-aware federated aggregation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run every (config, seed) pair of a config file")
    run_p.add_argument("config", help="path to a key = value config file")
    run_p.add_argument("--out", default=None, help="output directory (default: config's 'out' or ./results)")
    run_p.add_argument("--seeds", default=None, help="comma-separated seeds overriding the config")
    run_p.add_argument("--jobs", type=int, default=1, help="worker threads")
    run_p.add_argument("--validate-only", action="store_true", help="parse and validate, run nothing")

    level = os.environ.get("FEDFAIR_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")

    args = parser.parse_args(argv)
    try:
        seeds = None if args.seeds is None else _parse_seeds("--seeds", args.seeds)
        suite = parse_config(args.config, out_dir=args.out, seeds=seeds)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    if args.validate_only:
        print(f"ok: {len(suite.configs)} run(s) validated")
        return 0
    if args.jobs < 1:
        print("config error: --jobs: must be >= 1", file=sys.stderr)
        return 1
    return run_suite(suite, jobs=args.jobs)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
