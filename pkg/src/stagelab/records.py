"""Append-only JSONL run records with deterministic byte-level layout.

Floats are written with 17 significant digits so every value survives a
write/read round trip exactly; stdlib json is only used for parsing and for
string escaping, because its writer does not let us pin the float format.
Records are flat dicts written in insertion order, one per line, so a rerun
of the same experiment produces byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from typing import TYPE_CHECKING, Any, Iterable, Mapping

if TYPE_CHECKING:  # pragma: no cover
    from .network import Trajectory
    from .pipeline import PipelineRun

RECORD_SCHEMA_VERSION = 1


def format_float(x: float) -> str:
    """17-significant-digit decimal form; always parses back to the same float."""
    if not math.isfinite(x):
        raise ValueError(f"records only hold finite floats, got {x}")
    s = "%.17g" % x
    if not any(c in s for c in ".eE"):
        s += ".0"  # keep the value a float on the JSON side
    return s


def _json_value(v: Any) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format_float(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_value(item) for item in v) + "]"
    raise TypeError(f"record values must be scalars or flat lists, got {type(v).__name__}")


def dumps_record(record: Mapping[str, Any]) -> str:
    """One canonical JSON line, keys in insertion order."""
    body = ", ".join(f"{json.dumps(k)}: {_json_value(v)}" for k, v in record.items())
    return "{" + body + "}"


def write_records(path: str | os.PathLike, records: Iterable[Mapping[str, Any]], append: bool = False) -> int:
    """Write records one per line; returns the number written."""
    mode = "a" if append else "w"
    count = 0
    with open(path, mode, encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps_record(record))
            fh.write("\n")
            count += 1
    return count


def read_records(path: str | os.PathLike) -> list[dict[str, Any]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def existing_run_ids(path: str | os.PathLike) -> set[str]:
    """run_id values already present in a records file (empty set if absent)."""
    if not os.path.exists(path):
        return set()
    return {rec["run_id"] for rec in read_records(path) if "run_id" in rec}


def stable_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def snapshot_records(trajectory: "Trajectory") -> list[dict[str, Any]]:
    """One flat record per snapshot: step, losses, aligned diagonal, offdiag norm."""
    out = []
    for snap in trajectory.snapshots:
        record: dict[str, Any] = {
            "schema_version": RECORD_SCHEMA_VERSION,
            "kind": "snapshot",
            "step": snap.step,
            "train_loss": snap.train_loss,
        }
        for name in sorted(snap.probe_losses):
            record[f"probe_{name}"] = snap.probe_losses[name]
        record["aligned_diag"] = (
            None if snap.aligned_diag is None else [float(v) for v in snap.aligned_diag]
        )
        record["offdiag_norm"] = snap.aligned_offdiag
        out.append(record)
    return out


def pipeline_run_record(run: "PipelineRun", seed: int, config_hash: str) -> dict[str, Any]:
    """Flatten a pipeline run into a record row (metrics null on failure)."""
    plan1, plan2, plan3 = run.plans
    record: dict[str, Any] = {
        "schema_version": RECORD_SCHEMA_VERSION,
        "kind": "pipeline_run",
        "run_id": run.run_id,
        "seed": seed,
        "config_hash": config_hash,
        "status": "ok" if run.succeeded else "diverged",
        "failed_stage": run.failed_stage,
        "mix_fraction": plan1.mix_fraction,
        "steps1": plan1.steps,
        "eta1": plan1.eta,
        "replay_fraction": plan2.replay_fraction,
        "lambda_ridge": plan2.ridge_lambda,
        "steps2": plan2.steps,
        "eta2": plan2.eta,
        "steps3": plan3.steps,
        "eta3": plan3.eta,
    }
    if run.metrics is None:
        record.update({"L_im": None, "L_ret": None, "L_ft": None, "L_pre": None, "delta": None})
    else:
        record.update(run.metrics.as_record())
    return record
