import csv
import hashlib
import json
import os
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any, Optional

import numpy as np

THREADS_ENV_VAR = "WAVELAB_THREADS"


def format_float(value: float) -> str:
    """
    Shortest round-trip decimal form of a binary double.
    """
    return repr(float(value))


def write_csv(
    path: Path,
    columns: Mapping[str, Sequence[float]],
    metadata: Optional[Mapping[str, Any]] = None,
):
    """
    Write equal-length columns as CSV, preceded by ``# key=value`` header lines.
    """
    names = list(columns)
    arrays = [np.asarray(columns[name], dtype=float) for name in names]
    if len({len(a) for a in arrays}) > 1:
        raise ValueError("CSV columns must have equal length.")

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf8") as fout:
        for key, value in (metadata or {}).items():
            rendered = format_float(value) if isinstance(value, float) else f"{value}"
            fout.write(f"# {key}={rendered}\n")

        writer = csv.writer(fout, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*arrays):
            writer.writerow([format_float(x) for x in row])


def read_csv(path: Path) -> tuple[dict[str, str], dict[str, np.ndarray]]:
    metadata: dict[str, str] = {}
    lines = path.read_text(encoding="utf8").splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            metadata[key] = value
        else:
            body.append(line)

    rows = list(csv.reader(body))
    header, data = rows[0], rows[1:]
    columns = {
        name: np.array([float(row[i]) for row in data], dtype=float)
        for i, name in enumerate(header)
    }
    return metadata, columns


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf8")).hexdigest()


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def power_law_exponent(x: Iterable[float], y: Iterable[float]) -> float:
    """
    Least-squares slope of ``log y`` against ``log x``.
    Non-positive samples are dropped.
    """
    xs = np.asarray(list(x), dtype=float)
    ys = np.asarray(list(y), dtype=float)
    keep = (xs > 0) & (ys > 0) & np.isfinite(ys)
    if keep.sum() < 2:
        return float("nan")

    slope, _ = np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)
    return float(slope)


def observed_order(spacings: Sequence[float], errors: Sequence[float]) -> float:
    """
    Convergence order fitted over a refinement ladder.
    """
    return power_law_exponent(spacings, errors)


def is_decreasing(values: Sequence[float], rtol: float = 0.0) -> bool:
    """
    True when each value is at most the previous one (up to ``rtol`` of it).
    """
    arr = np.asarray(values, dtype=float)
    if len(arr) < 2:
        return True

    return bool(np.all(arr[1:] <= arr[:-1] * (1 + rtol)))


def trend_slope(t: Sequence[float], values: Sequence[float]) -> float:
    """
    Least-squares slope of ``values`` against ``t``.
    """
    ts = np.asarray(t, dtype=float)
    vs = np.asarray(values, dtype=float)
    if len(ts) < 2:
        return 0.0

    slope, _ = np.polyfit(ts, vs, 1)
    return float(slope)


def get_worker_count(default: int = 1) -> int:
    if not (raw := os.environ.get(THREADS_ENV_VAR)):
        return default

    try:
        return max(1, int(raw))
    except ValueError:
        return default


def jsonable(data: Any) -> Any:
    """
    Plain JSON structure for reports: models are dumped, arrays become lists.
    """
    if hasattr(data, "model_dump"):
        return jsonable(data.model_dump())

    elif isinstance(data, Mapping):
        return {str(key): jsonable(value) for key, value in data.items()}

    elif isinstance(data, (list, tuple)):
        return [jsonable(value) for value in data]

    elif isinstance(data, np.ndarray):
        return [jsonable(value) for value in data.tolist()]

    elif isinstance(data, np.generic):
        return data.item()

    elif isinstance(data, Path):
        return data.as_posix()

    return data


def dump_json(data: Any) -> str:
    return json.dumps(jsonable(data), sort_keys=True, indent=2) + "\n"
