"""File formats and multi-stream time association.

The scenario codec lives in :mod:`uwslam.io.scenario` and is not imported here.
"""

from .associate import Association, associate, nearest_state
from .calibration import (
    CalibrationFile,
    dump_calibration,
    load_calibration,
    read_calibration,
    write_calibration,
)
from .grid import load_grid, read_grid, save_grid, write_grid
from .log import CameraRecord, SensorLog, load_log, read_log, save_log, write_log
from .ply import export_ply, read_ply
from .trajectory import format_trajectory, parse_trajectory, read_trajectory, write_trajectory

__all__ = [
    "Association",
    "associate",
    "nearest_state",
    "CalibrationFile",
    "dump_calibration",
    "load_calibration",
    "read_calibration",
    "write_calibration",
    "load_grid",
    "read_grid",
    "save_grid",
    "write_grid",
    "CameraRecord",
    "SensorLog",
    "load_log",
    "read_log",
    "save_log",
    "write_log",
    "export_ply",
    "read_ply",
    "format_trajectory",
    "parse_trajectory",
    "read_trajectory",
    "write_trajectory",
]
