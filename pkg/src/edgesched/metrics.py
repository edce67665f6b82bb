"""Run metrics: per-device time series, task latencies and summary tables.

All serialized output is deterministic for a fixed run: rows are sorted,
floats use a fixed format, and wall-clock time never appears in data files
(only in the sidecar metadata file).
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping


def _fmt(value: float) -> str:
    return f"{value:.6f}"


@dataclass
class DeviceSeries:
    t: list[int] = field(default_factory=list)
    cpu: list[float] = field(default_factory=list)
    mem: list[float] = field(default_factory=list)
    thp: list[float] = field(default_factory=list)

    def sample(self, t: int, cpu: float, mem: float, thp: float):
        self.t.append(t)
        self.cpu.append(cpu)
        self.mem.append(mem)
        self.thp.append(thp)


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    return statistics.fmean(values) if values else 0.0


def _pstd(values: Iterable[float]) -> float:
    values = list(values)
    return statistics.pstdev(values) if len(values) > 1 else 0.0


@dataclass
class MetricsReport:
    """Everything measured in one scenario run."""

    scenario: str
    strategy: str
    seed: int
    series: dict[str, DeviceSeries]
    edge_ids: list[str]
    robot_ids: list[str]
    task_latency_ms: dict[str, float]
    task_runnable_at: dict[str, int]
    task_completed_at: dict[str, int]
    handoffs: int = 0
    restarts: int = 0
    unassigned_warnings: int = 0
    last_completion_ms: int = 0
    duration_ms: int = 0

    # -- aggregates ---------------------------------------------------------

    def mean_task_latency_ms(self) -> float:
        return _mean(self.task_latency_ms.values())

    def _device_metric(self, device: str, metric: str) -> list[float]:
        return getattr(self.series[device], metric)

    def edge_metric_mean(self, metric: str) -> float:
        values: list[float] = []
        for eid in self.edge_ids:
            values.extend(self._device_metric(eid, metric))
        return _mean(values)

    def robot_cpu_mean(self) -> float:
        values: list[float] = []
        for rid in self.robot_ids:
            values.extend(self._device_metric(rid, "cpu"))
        return _mean(values)

    def terminal_edge_cpu_mean(self) -> float:
        """Mean edge CPU over samples at or after the last task completion."""
        values: list[float] = []
        for eid in self.edge_ids:
            s = self.series[eid]
            values.extend(
                v for t, v in zip(s.t, s.cpu) if t >= self.last_completion_ms
            )
        return _mean(values)

    def scalar_metrics(self) -> dict[str, float]:
        return {
            "task_latency_ms": self.mean_task_latency_ms(),
            "edge_cpu_pct": self.edge_metric_mean("cpu"),
            "edge_ram_pct": self.edge_metric_mean("mem"),
            "edge_thp_pct": self.edge_metric_mean("thp"),
            "robot_cpu_pct": self.robot_cpu_mean(),
            "terminal_edge_cpu_pct": self.terminal_edge_cpu_mean(),
            "handoffs": float(self.handoffs),
            "restarts": float(self.restarts),
        }

    # -- serialization --------------------------------------------------------

    def summary_rows(self) -> list[tuple[str, str, float, float]]:
        """(metric, device, mean, std) rows for the summary table."""
        rows: list[tuple[str, str, float, float]] = []
        for metric, label in (("cpu", "cpu_pct"), ("mem", "ram_pct"), ("thp", "thp_pct")):
            for device in self.edge_ids + self.robot_ids:
                values = self._device_metric(device, metric)
                rows.append((label, device, _mean(values), _pstd(values)))
        latencies = list(self.task_latency_ms.values())
        rows.append(("task_latency_ms", "all", _mean(latencies), _pstd(latencies)))
        return rows

    def summary_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "device", "mean", "std"])
        for metric, device, mean, std in self.summary_rows():
            writer.writerow([metric, device, _fmt(mean), _fmt(std)])
        return buf.getvalue()

    def timeseries_csv(self, device: str, metric: str) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t_ms", metric])
        s = self.series[device]
        for t, v in zip(s.t, getattr(s, metric)):
            writer.writerow([t, _fmt(v)])
        return buf.getvalue()

    def latency_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["task", "runnable_at_ms", "completed_at_ms", "latency_ms"])
        for tid in sorted(self.task_latency_ms):
            writer.writerow(
                [
                    tid,
                    self.task_runnable_at[tid],
                    self.task_completed_at[tid],
                    _fmt(self.task_latency_ms[tid]),
                ]
            )
        return buf.getvalue()


COMPARE_METRICS = (
    "task_latency_ms",
    "edge_cpu_pct",
    "edge_ram_pct",
    "edge_thp_pct",
    "robot_cpu_pct",
    "handoffs",
)


@dataclass
class ComparisonReport:
    """Per-strategy mean/STD of every scalar metric over a set of seeds."""

    scenario: str
    strategies: list[str]
    seeds: list[int]
    cells: Mapping[str, Mapping[str, tuple[float, float]]]  # strategy -> metric -> (mean, std)

    def latency_ordering(self) -> list[str]:
        return sorted(
            self.strategies, key=lambda s: self.cells[s]["task_latency_ms"][0]
        )

    def verdict(self) -> str:
        ordering = self.latency_ordering()
        parts = [f"latency ordering: {' < '.join(ordering)}"]
        best = ordering[0]
        best_mean = self.cells[best]["task_latency_ms"][0]
        for other in ordering[1:]:
            other_mean = self.cells[other]["task_latency_ms"][0]
            if other_mean > 0:
                cut = 100.0 * (other_mean - best_mean) / other_mean
                parts.append(f"{best} vs {other}: -{cut:.1f}%")
        return "; ".join(parts)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "strategy", "mean", "std"])
        for metric in COMPARE_METRICS:
            for strategy in self.strategies:
                mean, std = self.cells[strategy][metric]
                writer.writerow([metric, strategy, _fmt(mean), _fmt(std)])
        return buf.getvalue()

    def to_text(self) -> str:
        width = max(len(s) for s in self.strategies) + 2
        metric_w = max(len(m) for m in COMPARE_METRICS) + 2
        lines = [
            "".join(
                [f"{'metric':<{metric_w}}"]
                + [f"{s:>{width + 12}}" for s in self.strategies]
            )
        ]
        for metric in COMPARE_METRICS:
            cells = []
            for strategy in self.strategies:
                mean, std = self.cells[strategy][metric]
                cells.append(f"{mean:>{width}.2f} ±{std:>9.2f}")
            lines.append(f"{metric:<{metric_w}}" + "".join(cells))
        lines.append(self.verdict())
        return "\n".join(lines) + "\n"


def build_comparison(
    scenario: str,
    per_run: Mapping[str, Mapping[int, MetricsReport]],
    strategies: list[str],
    seeds: list[int],
) -> ComparisonReport:
    cells: dict[str, dict[str, tuple[float, float]]] = {}
    for strategy in strategies:
        metric_values: dict[str, list[float]] = {m: [] for m in COMPARE_METRICS}
        for seed in seeds:
            scalars = per_run[strategy][seed].scalar_metrics()
            for m in COMPARE_METRICS:
                metric_values[m].append(scalars[m])
        cells[strategy] = {
            m: (_mean(vs), _pstd(vs)) for m, vs in metric_values.items()
        }
    return ComparisonReport(
        scenario=scenario, strategies=list(strategies), seeds=list(seeds), cells=cells
    )


def run_meta_json(scenario: str, strategy: str, seed: int, wall_clock_iso: str) -> str:
    return json.dumps(
        {
            "scenario": scenario,
            "strategy": strategy,
            "seed": seed,
            "wall_clock": wall_clock_iso,
        },
        sort_keys=True,
        indent=2,
    )
