"""Touch runtime: simulated delay measurements, nearest-delay classification, session logs."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .fabrication import CalibrationTable

CSV_FIELDS = ["timestamp", "node", "duration", "measured_delay"]


@dataclass(frozen=True)
class ClassifierConfig:
    clock_period: float = 21e-9
    noise_sigma: float = 0.0
    none_threshold: Optional[float] = None  # None -> half the smallest calibrated delay

    def __post_init__(self):
        if self.clock_period < 0 or self.noise_sigma < 0:
            raise ValueError("clock_period and noise_sigma must be non-negative")
        if self.none_threshold is not None and self.none_threshold < 0:
            raise ValueError("none_threshold must be non-negative")

    def threshold(self, table: CalibrationTable) -> float:
        if self.none_threshold is not None:
            return self.none_threshold
        return 0.5 * float(np.min(table.delays)) if len(table.delays) else 0.0


@dataclass(frozen=True)
class TouchEvent:
    timestamp: float
    measured_delay: float
    classified: Optional[int]  # node label, None for no touch
    duration: float

    def __post_init__(self):
        if self.measured_delay < 0 or self.duration < 0:
            raise ValueError("measured_delay and duration must be non-negative")


def quantize(delay: float, clock_period: float) -> float:
    if clock_period <= 0:
        return max(0.0, delay)
    return max(0, round(delay / clock_period)) * clock_period


def simulate_measurement(true_node: Optional[int], table: CalibrationTable, cfg: ClassifierConfig,
                         rng: np.random.Generator) -> float:
    """Predicted delay plus Gaussian noise, rounded to whole clock cycles; no touch reads 0."""
    if true_node is None:
        return 0.0
    d = float(table.delays[true_node])
    if cfg.noise_sigma > 0:
        d += float(rng.normal(0.0, cfg.noise_sigma))
    return quantize(d, cfg.clock_period)


def classify_touch(measured: float, table: CalibrationTable, cfg: ClassifierConfig) -> Optional[int]:
    """Nearest calibrated delay (lower id on ties), or None.

    None is returned below the no-touch threshold and when the nearest delay is at
    least half the table's minimum margin away.
    """
    if measured < cfg.threshold(table):
        return None
    dist = np.abs(np.asarray(table.delays, dtype=float) - measured)
    best = int(np.argmin(dist))
    # relative slack so an exact midpoint is rejected despite rounding
    if len(dist) > 1 and dist[best] >= 0.5 * table.min_margin * (1 - 1e-9):
        return None
    return best


def _label(value: str) -> Optional[int]:
    value = value.strip()
    return None if value in ("", "none") else int(value)


def read_session(path) -> list[TouchEvent]:
    with open(path, newline="") as fh:
        return [TouchEvent(float(row["timestamp"]), float(row["measured_delay"]),
                           _label(row["node"]), float(row["duration"]))
                for row in csv.DictReader(fh)]


def session_summary(events: Iterable[TouchEvent]) -> dict:
    dwell: dict[str, float] = {}
    counts: dict[str, int] = {}
    order = []
    n = 0
    for ev in events:
        n += 1
        if ev.classified is None:
            continue
        key = str(ev.classified)
        dwell[key] = dwell.get(key, 0.0) + ev.duration
        counts[key] = counts.get(key, 0) + 1
        order.append(ev.classified)
    return {"events": n, "dwell": dwell, "touch_counts": counts, "order": order}


def log_session(events: Iterable[TouchEvent], out_path, summary_path=None) -> dict:
    """Append events to a CSV log and rewrite the JSON summary of the whole log.

    Events must be time-ordered, also relative to rows already in the file.
    """
    out_path = Path(out_path)
    events = list(events)
    existing = read_session(out_path) if out_path.exists() and out_path.stat().st_size else []
    last = existing[-1].timestamp if existing else -np.inf
    for ev in events:
        if ev.timestamp < last:
            raise ValueError("events must be time-ordered")
        last = ev.timestamp
    new_file = not existing and not (out_path.exists() and out_path.stat().st_size)
    with open(out_path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(CSV_FIELDS)
        for ev in events:
            writer.writerow([repr(ev.timestamp), "" if ev.classified is None else ev.classified,
                             repr(ev.duration), repr(ev.measured_delay)])
    summary = session_summary(existing + events)
    if summary_path is None:
        summary_path = out_path.with_suffix(".summary.json")
    Path(summary_path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def read_touch_script(path) -> list[tuple[float, Optional[int], float]]:
    """Rows of ``timestamp,node,duration``; an empty node or ``none`` means no touch."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#") or rec[0].strip() == "timestamp":
                continue
            if len(rec) != 3:
                raise ValueError(f"touch script rows need 3 fields, got {rec}")
            rows.append((float(rec[0]), _label(rec[1]), float(rec[2])))
    return rows


def simulate_session(script, table: CalibrationTable, cfg: ClassifierConfig,
                     rng: np.random.Generator) -> list[TouchEvent]:
    """Measure and classify each scripted touch; node labels follow ``table.node_ids``."""
    ids = table.node_ids or list(range(len(table.delays)))
    index = {label: k for k, label in enumerate(ids)}
    events = []
    for ts, label, duration in script:
        if label is not None and label not in index:
            raise ValueError(f"unknown node {label}")
        node = None if label is None else index[label]
        measured = simulate_measurement(node, table, cfg, rng)
        got = classify_touch(measured, table, cfg)
        events.append(TouchEvent(ts, measured, None if got is None else ids[got], duration))
    return events
