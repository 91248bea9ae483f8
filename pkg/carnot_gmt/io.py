"""
Result Serialization
JSON reports, CSV tables and point clouds, and the provenance header.

RESPONSIBILITIES:
1. Full-precision JSON (17 significant digits, sorted keys) of result dicts
2. pandas CSV I/O: point clouds (x1..xn), characteristic-set tables, (scale, value) series
3. Provenance: package and library versions, config echo, seed
4. Constant metric files (JSON matrix or headerless CSV)
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy
import sympy as sp

from carnot_gmt import __version__
from carnot_gmt.errors import StructuralError
from carnot_gmt.manifold import CharacteristicScan

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def to_jsonable(obj, digits: int = 17):
    """Recursively convert numpy/sympy values; non-finite floats become strings"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, sp.Basic):
        if obj.is_Integer:
            return int(obj)
        if obj.is_Rational:
            return str(obj)
        obj = float(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            return str(value)
        return float(f"{value:.{digits}g}")
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dump_json(data: Dict, digits: int = 17) -> str:
    return json.dumps(to_jsonable(data, digits), sort_keys=True, indent=2, ensure_ascii=False)


def write_json(path: Path, data: Dict, digits: int = 17) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_json(data, digits) + "\n")
    return path


def provenance(config_echo: Dict) -> Dict:
    """Everything needed to re-run: versions, config echo, seed"""
    return {
        "package": "carnot-gmt",
        "version": __version__,
        "libraries": {
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "sympy": sp.__version__,
            "pandas": pd.__version__,
        },
        "config": config_echo,
        "seed": config_echo.get("seed", 0),
    }


def read_points(path: Path, n: int) -> np.ndarray:
    """Point cloud CSV with columns x1..xn"""
    path = Path(path)
    if not path.exists():
        raise StructuralError(f"Point file not found: {path}")
    df = pd.read_csv(path, float_precision="round_trip")
    required = [f"x{i}" for i in range(1, n + 1)]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise StructuralError(f"Point file {path} is missing columns: {missing}")
    values = df[required].to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise StructuralError(f"Point file {path} contains non-finite coordinates")
    return values


def write_points(path: Path, points: np.ndarray) -> Path:
    points = np.asarray(points, dtype=float)
    df = pd.DataFrame(points, columns=[f"x{i}" for i in range(1, points.shape[1] + 1)])
    return write_table(path, df)


def scan_to_frame(scan: CharacteristicScan) -> pd.DataFrame:
    """Columns t1..tp, x1..xn, degree (nullable for singular samples), class"""
    rows = {f"t{i + 1}": [s.t[i] for s in scan.samples] for i in range(scan.p)}
    rows.update({f"x{i + 1}": [s.x[i] for s in scan.samples] for i in range(scan.n)})
    df = pd.DataFrame(rows)
    df["degree"] = pd.array([s.degree for s in scan.samples], dtype="Int64")
    df["class"] = [s.point_class.value for s in scan.samples]
    return df


def series_frame(scales: Sequence[float], values: Sequence[float]) -> pd.DataFrame:
    return pd.DataFrame({"scale": list(scales), "value": list(values)})


def write_table(path: Path, df: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def read_metric(path: Path, n: int) -> np.ndarray:
    """n x n matrix from a JSON list of rows or a headerless CSV"""
    path = Path(path)
    if not path.exists():
        raise StructuralError(f"Metric file not found: {path}")
    try:
        if path.suffix.lower() == ".json":
            matrix = np.asarray(json.loads(path.read_text()), dtype=float)
        else:
            matrix = pd.read_csv(path, header=None, float_precision="round_trip").to_numpy(dtype=float)
    except (ValueError, json.JSONDecodeError) as e:
        raise StructuralError(f"Metric file {path} is malformed: {e}")
    if matrix.shape != (n, n):
        raise StructuralError(f"Metric file {path} must hold a {n}x{n} matrix, got shape {matrix.shape}")
    return matrix


def write_outputs(out_dir: Optional[Path], command: str, report: Dict,
                  tables: Optional[Dict[str, pd.DataFrame]] = None, digits: int = 17) -> List[Path]:
    """
    <command>.json plus one CSV per table into out_dir.

    The table named after the command is written as <command>.csv, others as
    <command>_<name>.csv.
    """
    if out_dir is None:
        return []
    out_dir = Path(out_dir)
    written = [write_json(out_dir / f"{command}.json", report, digits)]
    for name, df in (tables or {}).items():
        stem = command if name == command else f"{command}_{name}"
        written.append(write_table(out_dir / f"{stem}.csv", df))
    for p in written:
        logger.debug("wrote %s", p)
    return written
