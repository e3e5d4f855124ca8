"""
Data input and output for k2gof

Inputs are point CSVs with a header x1..xd. Outputs are JSON written with
orjson (sorted keys, numpy arrays serialized natively) and CSV written
with pandas (fixed float format, no index), so identical results give
byte-identical files.
"""

from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import orjson
import pandas as pd

from k2gof.config.logging_config import get_logger
from k2gof.errors import InputError
from k2gof.quadrature.grid import SupportRect

logger = get_logger(__name__)

FLOAT_FORMAT = "%.10g"
JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY | orjson.OPT_INDENT_2
MIN_ROWS = 10


def read_points_csv(
    path: Union[str, Path],
    d: int = 2,
    support: Optional[SupportRect] = None,
    min_rows: int = MIN_ROWS,
) -> np.ndarray:
    """
    Read data points from a CSV with header x1..xd

    Args:
        path: CSV file
        d: Number of coordinates
        support: If given, every row must lie inside it
        min_rows: Minimum number of data rows

    Returns:
        np.ndarray: Points of shape (rows, d)

    Raises:
        InputError: On a missing file, missing columns, non-numeric or
            non-finite values, too few rows, or a row outside ``support``
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"Data file not found: {path}")
    columns = [f"x{k + 1}" for k in range(d)]
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise InputError(f"Data file {path} is empty (0 rows, need at least {min_rows})") from None
    except pd.errors.ParserError as e:
        raise InputError(f"Data file {path} is not valid CSV: {e}") from e

    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputError(f"Data file {path} lacks column(s) {', '.join(missing)}; header must be {','.join(columns)}")
    if len(frame) < min_rows:
        raise InputError(f"Data file {path} has {len(frame)} rows, need at least {min_rows}")

    values = frame[columns].apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    bad = ~np.all(np.isfinite(values), axis=1)
    if bad.any():
        row = int(np.flatnonzero(bad)[0]) + 1
        raise InputError(f"Data file {path} row {row} has a missing or non-numeric value")
    if support is not None:
        inside = support.contains(values)
        if not inside.all():
            row = int(np.flatnonzero(~inside)[0]) + 1
            raise InputError(
                f"Data file {path} row {row} ({', '.join(f'{v:g}' for v in values[row - 1])}) lies outside "
                f"the support {list(support.lower)}..{list(support.upper)}"
            )
    logger.debug("points_read", path=str(path), rows=len(values))
    return values


def write_points_csv(path: Union[str, Path], points: np.ndarray) -> Path:
    pts = np.atleast_2d(points)
    frame = pd.DataFrame(pts, columns=[f"x{k + 1}" for k in range(pts.shape[1])])
    return write_csv(path, frame)


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"File not found: {path}")
    try:
        data = orjson.loads(path.read_bytes())
    except orjson.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise InputError(f"{path} must hold a JSON object")
    return data


def write_json(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
    """Write ``payload`` as canonical JSON (sorted keys, trailing newline)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(payload, option=JSON_OPTIONS) + b"\n")
    return path


def write_csv(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def histogram_table(values: Sequence[float], bins: int = 60) -> pd.DataFrame:
    """
    Equal-width histogram of replicate values

    Returns:
        pd.DataFrame: Columns bin_left, bin_right, count, density (integrates to 1)
    """
    arr = np.asarray(values, dtype=float)
    counts, edges = np.histogram(arr, bins=bins)
    widths = np.diff(edges)
    density = counts / (arr.size * widths) if arr.size else np.zeros(bins)
    return pd.DataFrame(
        {"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts, "density": density}
    )


def ecdf_table(values: Sequence[float]) -> pd.DataFrame:
    """Empirical cdf of replicate values at each sorted value"""
    arr = np.sort(np.asarray(values, dtype=float))
    return pd.DataFrame({"value": arr, "ecdf": np.arange(1, arr.size + 1) / arr.size})
