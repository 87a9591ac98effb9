"""Versioned JSON persistence for trajectory batches.

Python's ``json`` writes floats with ``repr``, the shortest decimal that
round-trips, so positions and fuel values survive a save/load bit-exactly.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from pathlib import Path
from typing import Optional

from .core import SignalPlan, Trajectory, VehicleParams
from .fuel import VtMicroCoefficients, interval_fuel_sum
from .offline import BatchEntry, EcoBatch, GridSpec, canonical_entries

FORMAT_VERSION = 1


class SchemaMismatch(ValueError):
    """The file is not a batch document this version understands."""


class HashMismatch(ValueError):
    """The stored entries do not match the recorded content hash."""


class ParamMismatch(ValueError):
    """The batch was built for different parameters than requested."""


def batch_document(batch: EcoBatch) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "theta": batch.grid_spec.theta,
        "dv": batch.grid_spec.dv,
        "params": dataclasses.asdict(batch.params),
        "phi": batch.phi,
        "signal": dataclasses.asdict(batch.plan),
        "coefficients": batch.coefficients.table_rows(),
        "T_min": batch.T_min,
        "content_hash": batch.hash,
        "entries": canonical_entries(batch.entries),
    }


def dumps_batch(batch: EcoBatch) -> str:
    return json.dumps(batch_document(batch), indent=1, sort_keys=True) + "\n"


def save_batch(batch: EcoBatch, path) -> None:
    Path(path).write_text(dumps_batch(batch))


def _require(doc: dict, key: str, kind):
    if key not in doc:
        raise SchemaMismatch(f"missing field '{key}'")
    if not isinstance(doc[key], kind):
        raise SchemaMismatch(f"field '{key}' has type {type(doc[key]).__name__}")
    return doc[key]


def load_batch(path, params: Optional[VehicleParams] = None,
               grid_spec: Optional[GridSpec] = None,
               plan: Optional[SignalPlan] = None, phi: Optional[int] = None,
               coefficients: Optional[VtMicroCoefficients] = None) -> EcoBatch:
    """Read a batch file, verify its hash and optionally its parameters.

    Every non-``None`` keyword must equal the value the batch was built with;
    otherwise ``ParamMismatch`` names the first differing field.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaMismatch("top level must be an object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise SchemaMismatch(f"unsupported format_version {doc.get('format_version')!r}")
    raw = _require(doc, "entries", list)
    stored_hash = _require(doc, "content_hash", str)
    try:
        spec = GridSpec(dv=float(_require(doc, "dv", (int, float))),
                        theta=float(_require(doc, "theta", (int, float))))
        file_params = VehicleParams(**_require(doc, "params", dict))
        file_plan = SignalPlan(**_require(doc, "signal", dict))
        file_K = VtMicroCoefficients.from_table_rows(_require(doc, "coefficients", list))
    except SchemaMismatch:
        raise
    except (TypeError, ValueError) as exc:
        raise SchemaMismatch(f"bad header: {exc}") from exc
    file_phi = _require(doc, "phi", int)

    entries = []
    for i, e in enumerate(raw):
        if not isinstance(e, dict) or set(e) != {"travel_ticks", "fuel", "positions"}:
            raise SchemaMismatch(f"entries[{i}] must have travel_ticks, fuel, positions")
        entries.append(e)
    blob = json.dumps(entries, sort_keys=True, separators=(",", ":"))
    if hashlib.sha256(blob.encode()).hexdigest() != stored_hash:
        raise HashMismatch("entries do not match content_hash")

    out = []
    for i, e in enumerate(entries):
        try:
            traj = Trajectory(e["positions"], 0, spec.theta)
        except ValueError as exc:
            raise SchemaMismatch(f"entries[{i}].positions: {exc}") from exc
        fuel = float(e["fuel"])
        xi = int(e["travel_ticks"])
        derived = interval_fuel_sum(traj, 0, xi, file_K)
        if not math.isclose(derived, fuel, rel_tol=1e-12, abs_tol=0.0):
            raise SchemaMismatch(f"entries[{i}].fuel disagrees with its positions")
        out.append(BatchEntry(xi, traj, fuel))

    wanted = {"params": (params, file_params), "grid_spec": (grid_spec, spec),
              "signal": (plan, file_plan), "phi": (phi, file_phi),
              "coefficients": (coefficients, file_K)}
    for name, (want, got) in wanted.items():
        if want is None or want == got:
            continue
        if dataclasses.is_dataclass(want):
            for f in dataclasses.fields(want):
                if getattr(want, f.name) != getattr(got, f.name):
                    raise ParamMismatch(
                        f"{name}.{f.name}: batch has {getattr(got, f.name)!r}, "
                        f"requested {getattr(want, f.name)!r}")
        raise ParamMismatch(f"{name}: batch has {got!r}, requested {want!r}")

    batch = EcoBatch(tuple(out), int(_require(doc, "T_min", int)), file_params, spec,
                     file_plan, file_phi, file_K)
    if batch.hash != stored_hash:
        raise HashMismatch("re-serialised entries do not match content_hash")
    return batch
