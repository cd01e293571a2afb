"""
Report emission for surveillance runs: per-day trace CSV, decision JSON and
an SVG plot of the free-capacity series with the detection and reference
dates marked.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from ..errors import ConfigurationError  # noqa: E402
from .ingest import RegionSeries  # noqa: E402
from .surveillance import SurveillanceResult  # noqa: E402

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "json", "svg")
TRACE_COLUMNS = ["date", "region", "x", "log_L", "log_Lhat", "log_U_diag"]

# Fixed salt and no timestamp keep the SVG byte-stable between runs.
plt.rcParams["svg.hashsalt"] = "multistream-detect"


def _prepare(out_dir: Union[str, Path]) -> Path:
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigurationError(f"cannot create output directory {out_dir}: {e}") from e
    if not out_dir.is_dir():
        raise ConfigurationError(f"output path {out_dir} is not a directory")
    return out_dir


def write_trace_csv(result: SurveillanceResult, path: Path) -> Path:
    result.trace.reindex(columns=TRACE_COLUMNS).to_csv(path, index=False, float_format="%.17g")
    return path


def write_decision_json(result: SurveillanceResult, path: Path) -> Path:
    path.write_text(json.dumps(result.to_record(), indent=2), encoding="utf-8")
    return path


def plot_series(result: SurveillanceResult, path: Path) -> Path:
    """Free capacity X per region against date, with vertical date markers."""
    fig, ax = plt.subplots(figsize=(9, 5))
    for s in result.series:
        ax.plot(pd.to_datetime(s.dates), s.x, marker=".", linewidth=1.2, label=s.region)
    if result.detection_date is not None:
        ax.axvline(
            pd.Timestamp(result.detection_date),
            color="red",
            linestyle="--",
            label=f"detection ({result.detected_region})",
            gid="detection-marker",
        )
    if result.reference_date is not None:
        ax.axvline(
            pd.Timestamp(result.reference_date),
            color="black",
            linestyle=":",
            label="reference",
            gid="reference-marker",
        )
    ax.set_xlabel("date")
    ax.set_ylabel("free capacity fraction")
    ax.legend(loc="lower left", fontsize="small")
    fig.autofmt_xdate()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


_WRITERS = {
    "csv": ("trace.csv", write_trace_csv),
    "json": ("decision.json", write_decision_json),
    "svg": ("report.svg", plot_series),
}


def emit_report(
    result: SurveillanceResult,
    out_dir: Union[str, Path],
    formats: Iterable[str] = REPORT_FORMATS,
) -> Dict[str, Path]:
    """Write the requested artifacts into ``out_dir``; returns format -> path."""
    formats = list(formats)
    unknown = [f for f in formats if f not in _WRITERS]
    if unknown:
        raise ConfigurationError("unknown report format", [f"{f!r}" for f in unknown])
    if result.trace.empty:
        raise ConfigurationError("nothing to report: the trace is empty")
    if "svg" in formats and not result.series:
        raise ConfigurationError("the SVG report needs the monitored series")

    out_dir = _prepare(out_dir)
    written: Dict[str, Path] = {}
    for fmt in formats:
        name, writer = _WRITERS[fmt]
        try:
            written[fmt] = writer(result, out_dir / name)
        except OSError as e:
            raise ConfigurationError(f"cannot write {out_dir / name}: {e}") from e
    logger.info("Report written to %s (%s)", out_dir, ", ".join(formats))
    return written


def write_series_csv(series: Sequence[RegionSeries], path: Union[str, Path]) -> Path:
    """Write series in the ingestion layout ``date,region,hospitalized``."""
    path = Path(path)
    frame = pd.concat([s.to_frame() for s in series], ignore_index=True)
    try:
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        raise ConfigurationError(f"cannot write {path}: {e}") from e
    return path


def write_capacity_json(series: Sequence[RegionSeries], path: Union[str, Path]) -> Path:
    path = Path(path)
    capacities: Dict[str, float] = {s.region: s.capacity for s in series}
    try:
        path.write_text(json.dumps(capacities, indent=2), encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot write {path}: {e}") from e
    return path


__all__: List[str] = [
    "REPORT_FORMATS",
    "emit_report",
    "plot_series",
    "write_capacity_json",
    "write_decision_json",
    "write_series_csv",
    "write_trace_csv",
]
