"""File formats and integrity hashing for campaign artifacts.

CSV holds bulk tabular data, JSON structured results.  Every artifact
carries the campaign config hash, the design-space hash and the tool
version (CSV files via a ``<name>.meta.json`` sidecar, JSON files inline),
and consuming commands verify them.  Writes are atomic and contain no
timestamps, so identical inputs reproduce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .design_space import DesignSpec
from .machine_model import GRID_POINTS, MEASURE_VALUES
from .optimizer import EvaluatedDesign, GenerationRecord, OptResult
from .surrogate import Dataset

DATASET_FORMAT = 1
FRONT_FORMAT = 1


def tool_version() -> str:
    return __version__


def canonical_hash(obj) -> str:
    """First 12 hex chars of the sha256 of a canonical JSON rendering."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def spec_hash(spec: DesignSpec) -> str:
    return canonical_hash(spec.to_dict())


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _fmt(x: float) -> str:
    return repr(float(x))


# --- dataset ---------------------------------------------------------------

def dataset_columns(spec: DesignSpec) -> list[str]:
    cols = list(spec.names)
    for grid in ("psi_d", "psi_q"):
        cols += [f"{grid}_{i}{j}" for i in range(GRID_POINTS)
                 for j in range(GRID_POINTS)]
    return cols + ["c_hy", "c_ed", "psi_ref"]


def write_dataset(path, ds: Dataset, meta: dict) -> None:
    """179-column CSV plus a ``.meta.json`` sidecar with seeds and hashes."""
    cols = dataset_columns(ds.spec)
    lines = [",".join(cols)]
    for v, t in zip(ds.designs, ds.targets):
        lines.append(",".join(_fmt(x) for x in np.concatenate([v, t])))
    atomic_write_text(path, "\n".join(lines) + "\n")
    sidecar = dict(meta)
    sidecar.update({
        "format_version": DATASET_FORMAT,
        "tool_version": tool_version(),
        "columns": len(cols),
        "rows": len(ds),
    })
    write_json(str(path) + ".meta.json", sidecar)


def read_dataset(path, spec: DesignSpec) -> tuple[Dataset, dict]:
    meta = read_json(str(path) + ".meta.json")
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = dataset_columns(spec)
        if header != expected:
            raise ValueError(f"{path}: unexpected columns")
        rows = [np.array([float(x) for x in line.split(",")])
                for line in fh if line.strip()]
    data = np.array(rows).reshape(len(rows), len(expected))
    n = spec.n_dims
    return Dataset(designs=data[:, :n], targets=data[:, n:n + MEASURE_VALUES],
                   spec=spec), meta


# --- optimization bundles ----------------------------------------------------

ARCHIVE_SCALARS = ("c_hy", "c_ed", "psi_ref")


def archive_columns(spec: DesignSpec) -> list[str]:
    return (["uid", "generation", "evaluator", "feasible", "physics_skipped",
             "violation"]
            + list(spec.names)
            + ["k1_neg_max_power_w", "k2_cost"]
            + [f"c{i + 1}" for i in range(6)]
            + list(ARCHIVE_SCALARS))


def _archive_row(d: EvaluatedDesign) -> str:
    cells = [str(d.uid), str(d.generation), d.evaluator,
             str(int(d.feasible)), str(int(d.physics_skipped)),
             _fmt(d.violation)]
    cells += [_fmt(x) for x in d.params]
    cells += [_fmt(d.kpis[0]), _fmt(d.kpis[1])]
    cells += [_fmt(x) for x in d.constraints]
    if d.measures is not None:
        cells += [_fmt(d.measures.c_hy), _fmt(d.measures.c_ed),
                  _fmt(d.measures.psi_ref)]
    else:
        cells += ["nan", "nan", "nan"]
    return ",".join(cells)


def write_archive_csv(path, result: OptResult, spec: DesignSpec) -> None:
    lines = [",".join(archive_columns(spec))]
    lines += [_archive_row(d) for d in result.archive.members]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_history_csv(path, history: list[GenerationRecord]) -> None:
    lines = ["generation,evaluations,hypervolume,feasible_count,front_size"]
    for h in history:
        lines.append(f"{h.generation},{h.evaluations},{_fmt(h.hypervolume)},"
                     f"{h.feasible_count},{h.front_size}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def front_to_json(result: OptResult, spec: DesignSpec, meta: dict) -> dict:
    entries = []
    for d in result.front:
        entries.append({
            "id": d.uid,
            "params": [float(x) for x in d.params],
            "kpis": {"max_power_w": -d.kpis[0], "cost": d.kpis[1]},
            "constraints": [float(x) for x in d.constraints],
            "feasible": bool(d.feasible),
            "evaluator": d.evaluator,
        })
    obj = {
        "format_version": FRONT_FORMAT,
        "meta": dict(meta, tool_version=tool_version()),
        "reference_point": (list(result.reference_point)
                            if result.reference_point is not None else None),
        "front": entries,
    }
    return obj


def front_kpi_array(front_obj: dict) -> np.ndarray:
    """(n, 2) minimization objectives [k1, k2] from a front JSON object."""
    rows = [(-e["kpis"]["max_power_w"], e["kpis"]["cost"])
            for e in front_obj["front"]]
    return np.array(rows).reshape(-1, 2)
