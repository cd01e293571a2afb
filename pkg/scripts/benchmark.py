#!/usr/bin/env python3
"""
Throughput benchmark for the multistream detector.

Measures detector updates per second on simulated pre-change data, for the
full-history mode and the window-limited mode, and records host information.
"""

import argparse
import json
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import psutil

from multistream_detect.core import GeometricPrior, ParameterGrid
from multistream_detect.detector import DetectorState
from multistream_detect.models import AutoregressiveModel, EpidemicGaussianModel, IIDGaussianModel


class DetectorBenchmark:
    """Benchmark suite over the three common model kinds."""

    def __init__(self, streams: int = 5, grid_size: int = 5, seed: int = 0):
        self.streams = streams
        self.grid_size = grid_size
        self.seed = seed

    def _setup(self, kind: str):
        if kind == "iid_gaussian":
            models = [IIDGaussianModel() for _ in range(self.streams)]
            points = np.linspace(0.2, 1.0, self.grid_size).tolist()
            grids = [ParameterGrid.uniform(points) for _ in range(self.streams)]
            states = [None] * self.streams
        elif kind == "ar_p":
            models = [AutoregressiveModel(0.0) for _ in range(self.streams)]
            points = np.linspace(0.1, 0.6, self.grid_size).tolist()
            grids = [ParameterGrid.uniform(points) for _ in range(self.streams)]
            states = [None] * self.streams
        else:
            p_stars = [1.0 / (100 + i) for i in range(1, self.streams + 1)]
            models = [EpidemicGaussianModel(p, scale=0.5e4 * (i + 2)) for i, p in enumerate(p_stars)]
            multipliers = np.linspace(1.05, 1.5, self.grid_size)
            grids = [ParameterGrid.uniform((multipliers * p).tolist()) for p in p_stars]
            states = [1.0] * self.streams
        return models, grids, states

    def benchmark_updates(self, kind: str, steps: int, window: Optional[int]) -> Dict:
        """Time ``steps`` detector updates."""
        label = "full" if window is None else f"window={window}"
        print(f"🚀 Benchmarking {kind} ({label}, {steps} steps)...")
        models, grids, states = self._setup(kind)
        detector = DetectorState(models, grids, GeometricPrior(rho=1e-3), states, window=window)
        rng = np.random.default_rng(self.seed)
        current = [m.initial_state(s) for m, s in zip(models, states)]

        observations = []
        for _ in range(steps):
            row = []
            for i, model in enumerate(models):
                y, current[i] = model.simulate_step(None, current[i], rng)
                row.append(y)
            observations.append(row)

        start_memory = psutil.Process().memory_info().rss / 1024 / 1024
        start_time = time.perf_counter()
        for row in observations:
            detector.update(row)
        duration = time.perf_counter() - start_time
        end_memory = psutil.Process().memory_info().rss / 1024 / 1024

        rate = steps / duration
        print(f"   ✅ {rate:.1f} updates/sec, {end_memory - start_memory:.1f}MB memory")
        return {
            "kind": kind,
            "mode": label,
            "steps": steps,
            "duration_seconds": round(duration, 3),
            "updates_per_second": round(rate, 2),
            "memory_delta_mb": round(end_memory - start_memory, 2),
        }

    def run_full_benchmark(self, steps: int, window: int) -> Dict:
        print("🏁 Starting detector benchmark")
        print("=" * 60)
        results: List[Dict] = []
        for kind in ("iid_gaussian", "ar_p", "epidemic_gaussian"):
            results.append(self.benchmark_updates(kind, steps, None))
            results.append(self.benchmark_updates(kind, steps, window))
        return {
            "benchmark_info": {
                "timestamp": datetime.now(timezone.utc).isoformat(),
                "streams": self.streams,
                "grid_size": self.grid_size,
                "system_info": {
                    "cpu_count": psutil.cpu_count(),
                    "memory_total_gb": round(psutil.virtual_memory().total / (1024**3), 2),
                    "python_version": platform.python_version(),
                    "platform": platform.platform(),
                },
            },
            "benchmark_results": results,
        }


def main() -> int:
    parser = argparse.ArgumentParser(description="Detector throughput benchmark")
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--window", type=int, default=200)
    parser.add_argument("--streams", type=int, default=5)
    parser.add_argument("--grid-size", type=int, default=5)
    parser.add_argument("--output", type=Path, default=Path("benchmark_results.json"))
    args = parser.parse_args()

    benchmark = DetectorBenchmark(args.streams, args.grid_size)
    results = benchmark.run_full_benchmark(args.steps, args.window)
    args.output.write_text(json.dumps(results, indent=2), encoding="utf-8")
    print(f"\n📊 Results saved to: {args.output.absolute()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
