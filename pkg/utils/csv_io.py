"""
CSV / JSON outputs with provenance headers

Floats are written with 17 significant digits so a write/read cycle restores
them bit for bit. CSV files may start with ``# provenance: <json>`` lines,
which the readers skip and return separately.
"""
import csv
import json
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.schemas import MeanRewardPath, RegretCurve, SlopeTableRow
from utils.errors import MalformedCSVError

PROVENANCE_PREFIX = "# provenance: "

PATH_HEADER_PREFIX = ["t"]
CURVE_HEADER = ["epoch", "mean_cum_regret", "std_err", "mean_policy_reward", "mean_oracle_reward"]
GRID_HEADER = ["T", "final_regret", "std_err", "theory_lower", "theory_upper"]
SLOPE_TABLE_HEADER = ["beta", "slope", "r_squared", "n_points"]


def fmt(value: Any) -> str:
    """17-significant-digit text for floats, plain text for ints"""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def _ensure_parent(file_path: str) -> None:
    parent = os.path.dirname(file_path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def write_csv(file_path: str, header: Sequence[str], rows: Iterable[Sequence[Any]],
              provenance: Optional[Dict[str, Any]] = None) -> None:
    """Write a CSV with an optional provenance comment line"""
    _ensure_parent(file_path)
    with open(file_path, "w", newline="") as f:
        if provenance is not None:
            f.write(PROVENANCE_PREFIX + json.dumps(provenance, sort_keys=True) + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_csv(file_path: str) -> Tuple[List[str], List[Tuple[int, List[str]]], Optional[Dict[str, Any]]]:
    """
    Read a CSV written by write_csv

    Returns:
        (header, [(line number, cells)], provenance or None)

    Raises:
        MalformedCSVError: empty file, missing header, ragged rows, bad provenance
    """
    header: Optional[List[str]] = None
    rows: List[Tuple[int, List[str]]] = []
    provenance = None
    with open(file_path, newline="") as f:
        for line_number, line in enumerate(f, start=1):
            text = line.rstrip("\n")
            if not text.strip():
                continue
            if text.startswith("#"):
                if text.startswith(PROVENANCE_PREFIX):
                    try:
                        provenance = json.loads(text[len(PROVENANCE_PREFIX):])
                    except json.JSONDecodeError as e:
                        raise MalformedCSVError(f"unreadable provenance header: {e}", line=line_number)
                continue
            cells = next(csv.reader([text]))
            if header is None:
                header = [c.strip() for c in cells]
                continue
            if len(cells) != len(header):
                raise MalformedCSVError(f"expected {len(header)} fields, got {len(cells)}", line=line_number)
            rows.append((line_number, cells))
    if header is None:
        raise MalformedCSVError("file is empty (no header)", line=1)
    return header, rows, provenance


def _parse_float(cell: str, line_number: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise MalformedCSVError(f"column {column}: not a number: {cell!r}", line=line_number)


def write_json(file_path: str, payload: Dict[str, Any]) -> None:
    """Write a JSON document (floats use the shortest exact repr)"""
    _ensure_parent(file_path)
    with open(file_path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_text(file_path: str, text: str, provenance: Optional[Dict[str, Any]] = None) -> None:
    """Plain-text report, optionally under a provenance comment line"""
    _ensure_parent(file_path)
    with open(file_path, "w") as f:
        if provenance is not None:
            f.write(PROVENANCE_PREFIX + json.dumps(provenance, sort_keys=True) + "\n")
        f.write(text + "\n")


def read_json(file_path: str) -> Dict[str, Any]:
    with open(file_path) as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# Mean-reward paths
# ---------------------------------------------------------------------------

def write_path_csv(path: MeanRewardPath, file_path: str, provenance: Optional[Dict[str, Any]] = None) -> None:
    """t,mu_1,...,mu_K with one row per epoch"""
    header = ["t"] + [f"mu_{k}" for k in range(1, path.num_arms + 1)]
    rows = ([t] + list(path.means[:, t - 1]) for t in range(1, path.horizon + 1))
    write_csv(file_path, header, rows, provenance)


def read_path_csv(file_path: str) -> MeanRewardPath:
    header, rows, _ = read_csv(file_path)
    if header[:1] != PATH_HEADER_PREFIX or len(header) < 3:
        raise MalformedCSVError(f"expected header t,mu_1,...,mu_K, got {','.join(header)}", line=1)
    if not rows:
        raise MalformedCSVError("path file has no epochs", line=2)
    means = np.empty((len(header) - 1, len(rows)))
    for j, (line_number, cells) in enumerate(rows):
        if int(_parse_float(cells[0], line_number, "t")) != j + 1:
            raise MalformedCSVError(f"epochs must run 1..T in order, got {cells[0]}", line=line_number)
        for k, cell in enumerate(cells[1:]):
            means[k, j] = _parse_float(cell, line_number, header[k + 1])
    return MeanRewardPath(means=means)


# ---------------------------------------------------------------------------
# Regret curves
# ---------------------------------------------------------------------------

def write_curve_csv(curve: RegretCurve, file_path: str, provenance: Optional[Dict[str, Any]] = None) -> None:
    """Cumulative regret trajectory of the reporting estimator"""
    rows = zip(curve.epochs, curve.mean_cum_regret, curve.std_err,
               curve.mean_cum_policy_reward, curve.mean_cum_oracle_reward)
    write_csv(file_path, CURVE_HEADER, rows, provenance)


def write_performance_csv(curve: RegretCurve, file_path: str, provenance: Optional[Dict[str, Any]] = None) -> None:
    """Averaged per-epoch performance trajectory plus both regret estimators"""
    header = (["epoch", "policy_instant_reward", "oracle_instant_reward"]
              + [f"freq_arm_{k}" for k in range(1, curve.num_arms + 1)]
              + ["mean_gap_regret", "mean_gap_std_err", "realized_regret", "realized_std_err"])
    columns = ([curve.epochs, curve.mean_policy_instant_reward, curve.oracle_instant_reward]
               + list(curve.arm_frequencies)
               + [curve.mean_gap_regret, curve.mean_gap_stderr, curve.realized_regret, curve.realized_stderr])
    write_csv(file_path, header, zip(*columns), provenance)


# ---------------------------------------------------------------------------
# Grid and slope tables
# ---------------------------------------------------------------------------

def write_grid_csv(rows: Iterable[Sequence[Any]], file_path: str, provenance: Optional[Dict[str, Any]] = None) -> None:
    """T,final_regret,std_err,theory_lower,theory_upper"""
    write_csv(file_path, GRID_HEADER, rows, provenance)


def read_grid_csv(file_path: str) -> List[Tuple[int, float, float]]:
    """
    (T, final_regret, std_err) rows of a grid CSV

    Raises:
        MalformedCSVError: wrong header, no rows, unparsable cells
    """
    header, rows, _ = read_csv(file_path)
    if header[:3] != GRID_HEADER[:3]:
        raise MalformedCSVError(f"expected header starting T,final_regret,std_err, got {','.join(header)}", line=1)
    if not rows:
        raise MalformedCSVError("grid file has no rows", line=2)
    parsed = []
    for line_number, cells in rows:
        horizon = _parse_float(cells[0], line_number, "T")
        if horizon != int(horizon) or horizon < 1:
            raise MalformedCSVError(f"column T: not a positive integer: {cells[0]!r}", line=line_number)
        parsed.append((int(horizon),
                       _parse_float(cells[1], line_number, "final_regret"),
                       _parse_float(cells[2], line_number, "std_err")))
    return parsed


def write_slope_table_csv(rows: Sequence[SlopeTableRow], file_path: str,
                          provenance: Optional[Dict[str, Any]] = None) -> None:
    write_csv(file_path, SLOPE_TABLE_HEADER,
              ((r.beta, r.slope, r.r_squared, r.n_points) for r in rows), provenance)


def read_slope_table_csv(file_path: str) -> List[SlopeTableRow]:
    header, rows, _ = read_csv(file_path)
    if header != SLOPE_TABLE_HEADER:
        raise MalformedCSVError(f"expected header {','.join(SLOPE_TABLE_HEADER)}, got {','.join(header)}", line=1)
    if not rows:
        raise MalformedCSVError("slope table has no rows", line=2)
    return [
        SlopeTableRow(
            beta=_parse_float(cells[0], n, "beta"),
            slope=_parse_float(cells[1], n, "slope"),
            r_squared=_parse_float(cells[2], n, "r_squared"),
            n_points=int(_parse_float(cells[3], n, "n_points")),
        )
        for n, cells in rows
    ]
