#!/usr/bin/env python3
"""
Write a synthetic surveillance dataset in the ingestion layout.

Produces ``hospitalizations.csv`` (date,region,hospitalized),
``capacities.json`` and ``p_star.json`` for five regions sized like the default
operating-characteristics rows, with an optional outbreak injected into one region.
"""

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

from multistream_detect.apps.report import write_capacity_json, write_series_csv
from multistream_detect.apps.surveillance import demo_p_stars, demo_regions

logger = logging.getLogger("make-synthetic-dataset")


def main() -> int:
    parser = argparse.ArgumentParser(description="Synthetic regional hospitalization data")
    parser.add_argument("--out-dir", type=Path, default=Path("data"))
    parser.add_argument("--days", type=int, default=60)
    parser.add_argument("--start", type=date.fromisoformat, default=date(2020, 2, 1))
    parser.add_argument("--outbreak-region", type=int, default=5, help="1-based; 0 disables")
    parser.add_argument("--outbreak-day", type=int, default=20)
    parser.add_argument("--q", type=float, default=1.2)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    series = demo_regions(
        args.days,
        outbreak_region=args.outbreak_region or None,
        outbreak_day=args.outbreak_day,
        q=args.q,
        seed=args.seed,
        start=args.start,
    )
    args.out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = write_series_csv(series, args.out_dir / "hospitalizations.csv")
    cap_path = write_capacity_json(series, args.out_dir / "capacities.json")
    p_star_path = args.out_dir / "p_star.json"
    p_star_path.write_text(json.dumps(demo_p_stars(), indent=2), encoding="utf-8")
    logger.info("Wrote %s, %s and %s", csv_path, cap_path, p_star_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
