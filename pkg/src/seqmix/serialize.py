"""File formats: fixed-point reports (JSON), iteration trajectories and
learning curves (comma-separated tables with a metadata comment block),
datasets (NPZ container).

Tables carry their provenance in leading "# key = value" comment lines and
are re-parseable by this module; solver and simulator trajectories share one
column layout so they can be joined on the iteration index.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .gamp import Dataset, GeneratorMetadata
from .model import ConjugateParameters, Dimensions, OrderParameters


# ----------------------------------------------------------------------
# Matrices inside JSON documents: row-major data with explicit shape.
# ----------------------------------------------------------------------

def _encode_array(a: np.ndarray) -> dict:
    a = np.asarray(a)
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def _decode_array(obj: dict) -> np.ndarray:
    return np.asarray(obj["data"], dtype=float).reshape(obj["shape"])


def _encode_keyed(blocks: dict) -> dict:
    return {f"{k[0]},{k[1]}": _encode_array(v) for k, v in blocks.items()}


def _decode_keyed(obj: dict) -> dict:
    out = {}
    for key, val in obj.items():
        ell, k = key.split(",")
        out[(int(ell), int(k))] = _decode_array(val)
    return out


def report_to_dict(report) -> dict:
    return {
        "converged": bool(report.converged),
        "iterations": int(report.iterations),
        "residual_history": [float(x) for x in report.residual_history],
        "free_entropy": float(report.free_entropy),
        "free_entropy_stderr": float(report.free_entropy_stderr),
        "test_error": float(report.test_error),
        "test_error_stderr": float(report.test_error_stderr),
        "train_loss": float(report.train_loss),
        "train_loss_stderr": float(report.train_loss_stderr),
        "params": {
            "q": _encode_keyed(report.params.q),
            "V": _encode_keyed(report.params.V),
            "m": _encode_keyed(report.params.m),
            "theta": _encode_keyed(report.params.theta),
            "v": _encode_array(report.params.v),
        },
        "conj": {
            "q_hat": _encode_keyed(report.conj.q_hat),
            "V_hat": _encode_keyed(report.conj.V_hat),
            "m_hat": _encode_keyed(report.conj.m_hat),
            "theta_hat": _encode_keyed(report.conj.theta_hat),
            "v_hat": _encode_array(report.conj.v_hat),
        },
    }


def save_report(report, path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=1))


def load_report(path) -> dict:
    doc = json.loads(Path(path).read_text())
    doc["params"] = OrderParameters(
        q=_decode_keyed(doc["params"]["q"]),
        V=_decode_keyed(doc["params"]["V"]),
        m=_decode_keyed(doc["params"]["m"]),
        theta=_decode_keyed(doc["params"]["theta"]),
        v=_decode_array(doc["params"]["v"]),
    )
    doc["conj"] = ConjugateParameters(
        q_hat=_decode_keyed(doc["conj"]["q_hat"]),
        V_hat=_decode_keyed(doc["conj"]["V_hat"]),
        m_hat=_decode_keyed(doc["conj"]["m_hat"]),
        theta_hat=_decode_keyed(doc["conj"]["theta_hat"]),
        v_hat=_decode_array(doc["conj"]["v_hat"]),
    )
    return doc


# ----------------------------------------------------------------------
# Tables.
# ----------------------------------------------------------------------

def write_table(path, header: list[str], rows: list[list], metadata: Optional[dict] = None) -> None:
    lines = []
    for key, val in (metadata or {}).items():
        lines.append(f"# {key} = {val}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_format_cell(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _format_cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def read_table(path) -> tuple[dict, list[str], list[list[str]]]:
    """Parse a table written by write_table: (metadata, header, string rows)."""
    metadata: dict = {}
    header: list[str] = []
    rows: list[list[str]] = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, val = body.split("=", 1)
                metadata[key.strip()] = val.strip()
            continue
        cells = line.split(",")
        if not header:
            header = cells
        else:
            rows.append(cells)
    return metadata, header, rows


def _stat_columns(dims: Dimensions) -> list[str]:
    cols = []
    for ell, k in dims.lk_pairs():
        for i in range(dims.r):
            for j in range(dims.r):
                cols.append(f"q_{ell}_{k}_{i}{j}")
        for i in range(dims.r):
            cols.append(f"m_{ell}_{k}_{i}")
        for i in range(dims.r):
            for j in range(dims.t):
                cols.append(f"theta_{ell}_{k}_{i}{j}")
        for i in range(dims.r):
            for j in range(dims.r):
                cols.append(f"V_{ell}_{k}_{i}{j}")
    for i in range(dims.r):
        for j in range(dims.r):
            cols.append(f"v_{i}{j}")
    return cols


def trajectory_header(dims: Dimensions) -> list[str]:
    return ["iteration"] + _stat_columns(dims) + ["residual"]


def _stat_row(dims: Dimensions, q, m, theta, V, v) -> list[float]:
    row: list[float] = []
    for key in dims.lk_pairs():
        row.extend(np.asarray(q[key]).reshape(-1).tolist())
        row.extend(np.asarray(m[key]).reshape(-1).tolist())
        row.extend(np.asarray(theta[key]).reshape(-1).tolist())
        row.extend(np.asarray(V[key]).reshape(-1).tolist())
    row.extend(np.asarray(v).reshape(-1).tolist())
    return row


def se_trajectory_rows(report, dims: Dimensions) -> list[list]:
    """Flattened solver trajectory, one row per sweep."""
    rows = []
    for t, (params, _conj) in enumerate(report.trajectory or []):
        residual = report.residual_history[t] if t < len(report.residual_history) else float("nan")
        rows.append(
            [t + 1]
            + _stat_row(dims, params.q, params.m, params.theta, params.V, params.v)
            + [residual]
        )
    return rows


def gamp_trajectory_rows(trajectory: list, residuals: list, dims: Dimensions) -> list[list]:
    """Flattened simulator trajectory in the same column layout."""
    rows = []
    for t, stats in enumerate(trajectory):
        residual = residuals[t] if t < len(residuals) else float("nan")
        rows.append(
            [stats["iteration"]]
            + _stat_row(dims, stats["q"], stats["m"], stats["theta"], stats["V"], stats["v"])
            + [residual]
        )
    return rows


CURVE_HEADER = [
    "model", "alpha", "lam", "seed", "eg", "eg_stderr", "et",
    "grad_norm", "iterations", "converged",
]


def curve_row(
    model: str, alpha: float, lam: float, seed, eg: float, eg_stderr: float,
    et: float, grad_norm: float, iterations: int, converged: bool,
) -> list:
    return [model, alpha, lam, seed, eg, eg_stderr, et, grad_norm, iterations, converged]


# ----------------------------------------------------------------------
# Datasets (binary container: arrays plus a JSON metadata entry).
# ----------------------------------------------------------------------

def save_dataset(data: Dataset, path) -> None:
    keys = sorted(data.meta.eigenvalues)
    meta = {
        "seed": int(data.meta.seed),
        "class_probs": list(data.meta.class_probs),
        "keys": [list(k) for k in keys],
    }
    arrays = {
        "X": data.X,
        "y": data.y,
        "c": data.c,
        "teacher": data.teacher,
        "atom_of": data.meta.atom_of,
        "meta_json": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
    }
    for i, key in enumerate(keys):
        arrays[f"eig_{i}"] = data.meta.eigenvalues[key]
        arrays[f"mean_{i}"] = data.meta.means[key]
    np.savez_compressed(path, **arrays)


def load_dataset(path) -> Dataset:
    with np.load(path) as arc:
        meta = json.loads(bytes(arc["meta_json"].tolist()).decode())
        keys = [tuple(k) for k in meta["keys"]]
        eigenvalues = {key: arc[f"eig_{i}"] for i, key in enumerate(keys)}
        means = {key: arc[f"mean_{i}"] for i, key in enumerate(keys)}
        gm = GeneratorMetadata(
            seed=meta["seed"],
            atom_of=arc["atom_of"],
            eigenvalues=eigenvalues,
            means=means,
            class_probs=tuple(meta["class_probs"]),
        )
        return Dataset(
            X=arc["X"], y=arc["y"], c=arc["c"], teacher=arc["teacher"], meta=gm
        )
