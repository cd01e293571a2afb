"""
Surveillance pipeline and command line: CSV ingestion, offline detection and reports.
"""

from .ingest import RegionSeries, calibrate_pre_change, ingest_csv, load_capacity_map
from .surveillance import (
    SurveillanceOptions,
    SurveillanceResult,
    demo_regions,
    detect_offline,
    synthesize_regions,
)

__all__ = [
    "RegionSeries",
    "SurveillanceOptions",
    "SurveillanceResult",
    "calibrate_pre_change",
    "demo_regions",
    "detect_offline",
    "ingest_csv",
    "load_capacity_map",
    "synthesize_regions",
]
