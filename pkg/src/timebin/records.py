"""Data containers shared by the simulator and the analysis code."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

# origin tags attached to every simulated coincidence
# "dark": the B click is a dark count; "dark_sync": a dark A click started a
# coincidence with a B photon
ORIGINS = ("pair", "multi_same", "multi_consecutive", "multi_far", "dark", "dark_sync")
ORIGIN_CODE = {name: code for code, name in enumerate(ORIGINS)}

RECORD_DTYPE = np.dtype(
    [("train_index", np.int64), ("t_A", np.float64), ("t_B", np.float64), ("origin", np.int8)]
)
RECORD_COLUMNS = ("train_index", "t_A_ns", "t_B_ns", "origin_tag")
HISTOGRAM_COLUMNS = ("dt_ns", "count") + ORIGINS


@dataclass(frozen=True)
class DetectionRecord:
    """One start-stop coincidence as seen by the time-to-digital converter."""

    train_index: int
    t_A: float
    t_B: float
    origin: str


def iter_records(records: np.ndarray):
    for row in records:
        yield DetectionRecord(
            int(row["train_index"]), float(row["t_A"]), float(row["t_B"]), ORIGINS[row["origin"]]
        )


def write_records_csv(path, records: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for rec in iter_records(records):
            writer.writerow([rec.train_index, _fmt(rec.t_A), _fmt(rec.t_B), rec.origin])


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


@dataclass
class CoincidenceHistogram:
    """Histogram of dt = t_A - t_B with bins centred on multiples of ``bin_width``.

    ``tagged`` holds the same histogram split by origin (simulation truth);
    it is empty for histograms read from measured data.
    """

    bin_width: float
    counts: np.ndarray
    total_trains: int
    bin_spacing: float = 13.0
    tagged: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 1 or self.counts.size % 2 != 1:
            raise ValueError("counts must be a 1-d array with an odd number of bins")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        self.tagged = {k: np.asarray(v, dtype=np.int64) for k, v in self.tagged.items()}

    @classmethod
    def empty(cls, bin_width: float, half_range: float, bin_spacing: float = 13.0, tagged=True):
        n_half = int(math.ceil(half_range / bin_width - 1e-9))
        size = 2 * n_half + 1
        tags = {k: np.zeros(size, np.int64) for k in ORIGINS} if tagged else {}
        return cls(bin_width, np.zeros(size, np.int64), 0, bin_spacing, tags)

    @property
    def n_half(self) -> int:
        return self.counts.size // 2

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.counts.size) - self.n_half) * self.bin_width

    @property
    def half_range(self) -> float:
        return (self.n_half + 0.5) * self.bin_width

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def window_mask(self, center: float, width: float) -> np.ndarray:
        # half a bin of slack absorbs rounding of exactly representable edges
        return np.abs(self.centers - center) <= 0.5 * width + 1e-9 * self.bin_width

    def window(self, center: float, width: float, origin: Optional[str] = None) -> int:
        data = self.counts if origin is None else self.tagged[origin]
        return int(data[self.window_mask(center, width)].sum())

    def window_width(self, center: float, width: float) -> float:
        """Effective width (ns) covered by the bins inside a window."""
        return float(self.window_mask(center, width).sum()) * self.bin_width

    def peak_lags(self) -> np.ndarray:
        """Integer lags l for which l*bin_spacing lies inside the histogram."""
        lmax = int(math.floor(self.half_range / self.bin_spacing))
        return np.arange(-lmax, lmax + 1)

    def offpeak_mask(self, guard: float) -> np.ndarray:
        """Bins farther than ``guard`` from every multiple of the bin spacing."""
        c = self.centers
        dist = np.abs(c - self.bin_spacing * np.round(c / self.bin_spacing))
        return dist > guard

    def __iadd__(self, other: "CoincidenceHistogram"):
        if other.counts.shape != self.counts.shape or other.bin_width != self.bin_width:
            raise ValueError("histogram binning mismatch")
        self.counts = self.counts + other.counts
        self.total_trains += other.total_trains
        for k, v in other.tagged.items():
            self.tagged[k] = self.tagged.get(k, 0) + v
        return self

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(HISTOGRAM_COLUMNS)
            zeros = np.zeros_like(self.counts)
            tag_cols = [self.tagged.get(k, zeros) for k in ORIGINS]
            for i, c in enumerate(self.centers):
                writer.writerow([_fmt(c), int(self.counts[i])] + [int(t[i]) for t in tag_cols])

    @classmethod
    def read_csv(cls, path, total_trains: int = 0, bin_spacing: float = 13.0):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header[:2]) != HISTOGRAM_COLUMNS[:2]:
                raise ValueError(f"unexpected histogram header {header!r}")
            rows = [r for r in reader if r]
        centers = np.array([float(r[0]) for r in rows])
        counts = np.array([int(r[1]) for r in rows], dtype=np.int64)
        tagged = {}
        for col, name in enumerate(header[2:], start=2):
            if name in ORIGINS:
                tagged[name] = np.array([int(r[col]) for r in rows], dtype=np.int64)
        bin_width = float(centers[1] - centers[0]) if centers.size > 1 else 1.0
        return cls(bin_width, counts, total_trains, bin_spacing, tagged)


@dataclass
class FringeScan:
    """Windowed dt = 0 coincidence counts versus the analyzer phase.

    ``accidental_level`` is the mean estimated flat background per phase
    point inside the dt = 0 window; ``exposure`` is trains per point.
    """

    theta: np.ndarray
    counts: np.ndarray
    exposure: int
    accidental_level: float = 0.0
    side_counts: Optional[np.ndarray] = None
    accidentals: Optional[np.ndarray] = None
    histogram: Optional[CoincidenceHistogram] = None

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.theta.shape != self.counts.shape or self.theta.ndim != 1:
            raise ValueError("theta and counts must be 1-d arrays of equal length")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")
        if not self.exposure > 0:
            raise ValueError("exposure must be > 0")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("theta_rad", "counts", "exposure"))
            for t, c in zip(self.theta, self.counts):
                writer.writerow([_fmt(t), int(c), int(self.exposure)])

    @classmethod
    def read_csv(cls, path, accidental_level: float = 0.0) -> "FringeScan":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        if not rows:
            raise ValueError("empty scan file")
        exposures = {int(r["exposure"]) for r in rows}
        if len(exposures) != 1:
            raise ValueError("scan points must share one exposure")
        return cls(
            [float(r["theta_rad"]) for r in rows],
            [int(r["counts"]) for r in rows],
            exposures.pop(),
            accidental_level,
        )


def merge_histograms(hists: Sequence[CoincidenceHistogram]) -> CoincidenceHistogram:
    out = CoincidenceHistogram(
        hists[0].bin_width,
        np.zeros_like(hists[0].counts),
        0,
        hists[0].bin_spacing,
        {k: np.zeros_like(v) for k, v in hists[0].tagged.items()},
    )
    for h in hists:
        out += h
    return out
