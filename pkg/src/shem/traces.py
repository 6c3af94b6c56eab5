"""Exogenous time series: prices, PV, non-shiftable load, outdoor temperature.

CSV layout (one row per slot, header required)::

    slot,buy_price,sell_price,pv_kw,load_kw,t_out_c

``slot`` is a 0-based index; slot 0 is taken to be midnight.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

COLUMNS = ("slot", "buy_price", "sell_price", "pv_kw", "load_kw", "t_out_c")


class TraceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TraceSet:
    buy_price: np.ndarray
    sell_price: np.ndarray
    pv: np.ndarray
    load: np.ndarray
    t_out: np.ndarray
    slot_length_hours: float = 1.0

    def __post_init__(self):
        arrays = {}
        for name in ("buy_price", "sell_price", "pv", "load", "t_out"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        lengths = {a.shape for a in arrays.values()}
        if len(lengths) != 1 or arrays["buy_price"].ndim != 1:
            raise TraceError(f"trace vectors must be 1-D and equal length, got {lengths}")
        for name in ("buy_price", "sell_price", "pv", "load"):
            bad = np.flatnonzero(arrays[name] < 0)
            if bad.size:
                raise TraceError(f"negative {name} at slot {bad[0]}")
        for name, a in arrays.items():
            if not np.all(np.isfinite(a)):
                raise TraceError(f"non-finite {name} at slot {np.flatnonzero(~np.isfinite(a))[0]}")
        bad = np.flatnonzero(arrays["sell_price"] > arrays["buy_price"])
        if bad.size:
            raise TraceError(f"sell price above buy price at slot {bad[0]}")
        if not self.slot_length_hours > 0:
            raise TraceError("slot_length_hours must be positive")

    def __len__(self) -> int:
        return self.buy_price.shape[0]

    @property
    def days(self) -> int:
        return len(self) // 24

    def slice(self, start: int, stop: int) -> "TraceSet":
        return TraceSet(
            self.buy_price[start:stop],
            self.sell_price[start:stop],
            self.pv[start:stop],
            self.load[start:stop],
            self.t_out[start:stop],
            self.slot_length_hours,
        )

    def row(self, t: int) -> tuple[float, float, float, float, float]:
        return (
            float(self.buy_price[t]),
            float(self.sell_price[t]),
            float(self.pv[t]),
            float(self.load[t]),
            float(self.t_out[t]),
        )


def concat(parts) -> TraceSet:
    parts = list(parts)
    return TraceSet(
        *(np.concatenate([getattr(p, n) for p in parts]) for n in ("buy_price", "sell_price", "pv", "load", "t_out")),
        slot_length_hours=parts[0].slot_length_hours,
    )


def load_csv(path, slot_length_hours: float = 1.0) -> TraceSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trace file not found: {path}")
    with path.open(newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise TraceError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = {c: [] for c in COLUMNS[1:]}
        # header is row 1, so the first data row is row 2 of the file
        for row_no, row in enumerate(reader, start=2):
            for c in COLUMNS[1:]:
                try:
                    v = float(row[c])
                except (TypeError, ValueError):
                    raise TraceError(f"{path}: row {row_no}: non-numeric {c}={row[c]!r}") from None
                if c != "t_out_c" and v < 0:
                    raise TraceError(f"{path}: row {row_no}: negative {c}={v}")
                cols[c].append(v)
            if cols["sell_price"][-1] > cols["buy_price"][-1]:
                raise TraceError(f"{path}: row {row_no}: sell_price exceeds buy_price")
    if not cols["buy_price"]:
        raise TraceError(f"{path}: no data rows")
    return TraceSet(
        cols["buy_price"], cols["sell_price"], cols["pv_kw"], cols["load_kw"], cols["t_out_c"],
        slot_length_hours=slot_length_hours,
    )


def write_csv(traces: TraceSet, path) -> None:
    with Path(path).open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COLUMNS)
        for t in range(len(traces)):
            w.writerow([t, *(repr(v) for v in traces.row(t))])


@dataclass(frozen=True)
class SynthProfile:
    t_out_mean: float = 27.5
    t_out_amplitude: float = 4.0
    t_out_peak_hour: float = 15.0
    t_out_day_sigma: float = 1.0
    t_out_hour_sigma: float = 0.3
    pv_peak_kw: float = 1.5
    sunrise_hour: float = 6.0
    sunset_hour: float = 20.0
    pv_cloud_min: float = 0.6
    # time-of-use tiers: [start_hour, price) pairs, applied in order
    tou_tiers: tuple = ((0, 0.06), (7, 0.12), (17, 0.26), (22, 0.12))
    price_noise: float = 0.01
    sell_ratio: float = 0.5
    load_base_kw: float = 0.5
    load_evening_kw: float = 1.0
    load_evening_hour: float = 19.5
    load_morning_kw: float = 0.4
    load_morning_hour: float = 7.5
    load_noise: float = 0.1


def synth_traces(seed: int, days: int, profile: SynthProfile | None = None) -> TraceSet:
    """Hourly summer-cooling traces with diurnal shape plus seeded noise."""
    p = profile or SynthProfile()
    if days < 1:
        raise TraceError("days must be >= 1")
    if not 0 <= p.sell_ratio <= 1:
        raise TraceError("sell_ratio must lie in [0, 1]")
    if not p.sunrise_hour < p.sunset_hour:
        raise TraceError("sunrise must precede sunset")
    rng = np.random.default_rng(seed)
    n = 24 * days
    hour = np.arange(n) % 24
    day = np.arange(n) // 24

    day_offset = rng.normal(0.0, p.t_out_day_sigma, days)[day]
    t_out = (
        p.t_out_mean
        + p.t_out_amplitude * np.cos(2 * np.pi * (hour - p.t_out_peak_hour) / 24)
        + day_offset
        + rng.normal(0.0, p.t_out_hour_sigma, n)
    )

    frac = (hour - p.sunrise_hour) / (p.sunset_hour - p.sunrise_hour)
    bell = np.where((frac > 0) & (frac < 1), np.sin(np.pi * np.clip(frac, 0, 1)) ** 2, 0.0)
    cloud = rng.uniform(p.pv_cloud_min, 1.0, days)[day]
    pv = np.maximum(p.pv_peak_kw * bell * cloud * (1 + 0.05 * rng.standard_normal(n)), 0.0)
    pv[bell == 0] = 0.0

    tiers = sorted(p.tou_tiers)
    base_price = np.zeros(n)
    for start, price in tiers:
        base_price[hour >= start] = price
    buy = np.maximum(base_price + p.price_noise * rng.standard_normal(n), 0.0)
    sell = p.sell_ratio * buy

    def bump(center, width):
        d = (hour - center + 12) % 24 - 12
        return np.exp(-0.5 * (d / width) ** 2)

    load = (
        p.load_base_kw
        + p.load_evening_kw * bump(p.load_evening_hour, 2.0)
        + p.load_morning_kw * bump(p.load_morning_hour, 1.0)
        + p.load_noise * rng.standard_normal(n)
    )
    load = np.maximum(load, 0.0)
    return TraceSet(buy, sell, pv, load, t_out, slot_length_hours=1.0)


def split(traces: TraceSet, train_days: int, test_days: int) -> tuple[TraceSet, TraceSet]:
    """Contiguous day-aligned prefix/suffix split."""
    if train_days < 0 or test_days < 0:
        raise TraceError("day counts must be non-negative")
    need = 24 * (train_days + test_days)
    if need > len(traces):
        raise IndexError(f"split needs {need} slots, trace has {len(traces)}")
    if train_days == 0:
        warnings.warn("empty training split", stacklevel=2)
    cut = 24 * train_days
    return traces.slice(0, cut), traces.slice(cut, need)
