"""Input and output helpers"""

from k2gof.utils.data_processing import (
    ecdf_table,
    histogram_table,
    read_json,
    read_points_csv,
    write_csv,
    write_json,
    write_points_csv,
)

__all__ = [
    "ecdf_table",
    "histogram_table",
    "read_json",
    "read_points_csv",
    "write_csv",
    "write_json",
    "write_points_csv",
]
