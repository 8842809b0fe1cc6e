"""Event-level Monte Carlo of the pulsed time-bin experiment.

Per train the simulation draws Poissonian pairs in each pump pulse, sends
both photons of every pair through the analyzer, applies detector
efficiency, dark counts and the trigger/gate logic, and histograms
dt = t_A - t_B over every (A trigger, B click) combination of the train.

Path model: each photon takes the short arm with probability t_s^2, the
long arm with t_l^2 and is lost otherwise; this fixes its arrival bin.
Which output port it leaves through is then drawn from the exact quantum
distribution. The two photons of a pair arriving in the same bin (ss from
bin k, ll from bin k - delay) are indistinguishable, so the probability
that they leave through equal ports is
``|x + y|^2 / (2 (|x|^2 + |y|^2))`` with ``x = a_k t_s^2`` and
``y = a_{k-delay} t_l^2 exp(i(delta_A + delta_B))``. Marginalized over the
latent creation bin this reproduces ``qstate.apply_analyzer`` exactly.
Every pair interferes with itself; photons of different pairs never
interfere with each other.

Random numbers come from Philox streams keyed by (seed, stream, chunk),
with a fixed chunk of CHUNK_TRAINS trains, so results do not depend on how
chunks are distributed over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .qstate import AnalyzerConfig, PumpTrain, build_spdc_state
from .records import (
    ORIGIN_CODE,
    ORIGINS,
    RECORD_DTYPE,
    CoincidenceHistogram,
    FringeScan,
)

CHUNK_TRAINS = 1 << 16
MAX_PAIR_SLOTS = 1 << 40  # n_trains * d guard

__all__ = [
    "CHUNK_TRAINS",
    "DetectorConfig",
    "ExperimentConfig",
    "PairBatch",
    "PhotonOutcomes",
    "RunResult",
    "ideal_detectors",
    "lab_detectors",
    "rng_stream",
    "sample_pairs",
    "phase_walk",
    "propagate_pairs",
    "propagate_single_pair",
    "detect",
    "run_experiment",
    "scan_phase",
    "pump_phase_step",
]


@dataclass(frozen=True)
class DetectorConfig:
    """Single-photon detector.

    ``dark_rate`` is in counts per ns: for a free-running detector it acts
    over the whole train span, for a gated one only inside open gates.
    """

    efficiency: float = 1.0
    dark_rate: float = 0.0
    gated: bool = False
    gate_width: float = 100.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency!r}")
        if self.dark_rate < 0:
            raise ValueError("dark_rate must be >= 0")
        if not self.gate_width > 0:
            raise ValueError("gate_width must be > 0")


def ideal_detectors() -> Tuple[DetectorConfig, DetectorConfig]:
    return DetectorConfig(), DetectorConfig()


def lab_detectors(gate_width: float = 100.0) -> Tuple[DetectorConfig, DetectorConfig]:
    """Ge APD at 1310 nm (10 %, 40 kHz darks) and gated InGaAs at 1550 nm
    (30 %, 1e-4 darks per ns)."""
    ge = DetectorConfig(efficiency=0.10, dark_rate=40e3 * 1e-9)
    ingaas = DetectorConfig(efficiency=0.30, dark_rate=1e-4, gated=True, gate_width=gate_width)
    return ge, ingaas


@dataclass(frozen=True)
class ExperimentConfig:
    train: PumpTrain
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)
    detector_a: DetectorConfig = field(default_factory=DetectorConfig)
    detector_b: DetectorConfig = field(default_factory=DetectorConfig)
    phase_noise_sigma: float = 0.0
    residual_visibility: float = 1.0
    n_trains: int = 100_000
    coincidence_window: float = 1.0
    trigger_width: Optional[float] = 1.0
    hist_bin_width: float = 0.25
    seed: int = 0

    def __post_init__(self):
        spacing = self.train.bin_spacing
        if int(self.n_trains) != self.n_trains or self.n_trains < 1:
            raise ValueError("n_trains must be a positive integer")
        if not 0 < self.coincidence_window <= spacing / 2:
            raise ValueError("coincidence_window must lie in (0, bin_spacing/2]")
        if self.phase_noise_sigma < 0:
            raise ValueError("phase_noise_sigma must be >= 0")
        if not 0.0 <= self.residual_visibility <= 1.0:
            raise ValueError("residual_visibility must lie in [0, 1]")
        if self.trigger_width is not None and not self.trigger_width > 0:
            raise ValueError("trigger_width must be > 0 or None")
        if not 0 < self.hist_bin_width <= self.coincidence_window:
            raise ValueError("hist_bin_width must lie in (0, coincidence_window]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.n_trains * self.train.d > MAX_PAIR_SLOTS:
            raise ValueError("n_trains * d exceeds the simulation size guard")

    @property
    def span(self) -> float:
        """Time span (ns) over which clicks can occur in one train."""
        return (self.train.d + self.analyzer.delay_bins) * self.train.bin_spacing

    @property
    def half_range(self) -> float:
        if self.detector_b.gated:
            return 0.5 * self.detector_b.gate_width
        return self.span


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator keyed by ``seed`` and integer stream keys."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *keys])))


def pump_phase_step(train: PumpTrain) -> float:
    return float(train.phases[1] - train.phases[0]) if train.d > 1 else 0.0


# ---------------------------------------------------------------------------
# pair creation


@dataclass(frozen=True)
class PairBatch:
    """Pairs created in a batch of trains; ``bin`` is 0-based."""

    n_trains: int
    train_index: np.ndarray
    bin: np.ndarray

    @property
    def n_pairs(self) -> int:
        return int(self.train_index.size)

    def counts(self, d: int) -> np.ndarray:
        """Pair numbers n_j as an (n_trains, d) array."""
        flat = np.bincount(self.train_index * d + self.bin, minlength=self.n_trains * d)
        return flat.reshape(self.n_trains, d)


def sample_pairs(train: PumpTrain, rng: np.random.Generator, n_trains: int = 1) -> PairBatch:
    """Independent Poisson(mu * d * c_j^2) pair numbers in each pulse.

    Drawn as a Poisson(mu * d) total per train with bins assigned i.i.d.
    from c_j^2, which has the same joint law and skips the empty pulses.
    """
    n_per_train = rng.poisson(train.mu * train.d, size=n_trains)
    train_index = np.repeat(np.arange(n_trains, dtype=np.int64), n_per_train)
    cdf = np.cumsum(train.intensities)
    bins = np.searchsorted(cdf, rng.random(train_index.size) * cdf[-1], side="right")
    np.minimum(bins, train.d - 1, out=bins)
    return PairBatch(n_trains, train_index, bins.astype(np.int64))


def phase_walk(sigma: float, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Accumulated pump phase walk W[:, j] = sum_{k<=j} eps_k, one row per train."""
    return np.cumsum(rng.normal(0.0, sigma, size=(n, d)), axis=1)


# ---------------------------------------------------------------------------
# analyzer


@dataclass
class PhotonOutcomes:
    """Per-pair analyzer outcome. Arrival bins are 0-based; a photon is
    ``monitored`` when it reached the observed output port."""

    arrival_A: np.ndarray
    arrival_B: np.ndarray
    monitored_A: np.ndarray
    monitored_B: np.ndarray
    path_A: np.ndarray  # 0 short, 1 long, 2 lost
    path_B: np.ndarray


def _choose_path(u: np.ndarray, t_s: float, t_l: float) -> np.ndarray:
    ps, pl = t_s * t_s, t_l * t_l
    return (u >= ps).astype(np.int8) + (u >= ps + pl).astype(np.int8)


def propagate_pairs(
    bins: np.ndarray,
    amplitudes: np.ndarray,
    analyzer: AnalyzerConfig,
    rng: np.random.Generator,
    walk: Optional[np.ndarray] = None,
    residual_visibility: float = 1.0,
) -> PhotonOutcomes:
    """Sample analyzer outcomes for pairs created in ``bins``.

    ``amplitudes`` are the state amplitudes a_j. ``walk``, when given, holds
    the accumulated phase walk of each pair's train (shape (n_pairs, d)).
    ``residual_visibility`` mixes in a fully distinguishable fraction.
    """
    bins = np.asarray(bins, dtype=np.int64)
    n = bins.size
    d = amplitudes.size
    m = analyzer.delay_bins
    tsA, tlA = analyzer.transmissions("A")
    tsB, tlB = analyzer.transmissions("B")
    u = rng.random((4, n))
    path_A = _choose_path(u[0], tsA, tlA)
    path_B = _choose_path(u[1], tsB, tlB)
    arrival_A = bins + m * np.minimum(path_A, 1)
    arrival_B = bins + m * np.minimum(path_B, 1)

    p_same = np.full(n, 0.5)
    both = (path_A < 2) & (path_A == path_B)
    interfering = both & (arrival_A >= m) & (arrival_A <= d - 1)
    idx = np.flatnonzero(interfering)
    if idx.size:
        k = arrival_A[idx]
        x = amplitudes[k] * (tsA * tsB)
        y = amplitudes[k - m] * (tlA * tlB) * np.exp(1j * (analyzer.delta_A + analyzer.delta_B))
        if walk is not None:
            rows = walk[idx]
            dphi = np.take_along_axis(rows, k[:, None], 1) - np.take_along_axis(
                rows, (k - m)[:, None], 1
            )
            # y carries the older pulse; relative phase is what matters
            x = x * np.exp(1j * dphi[:, 0])
        norm = np.abs(x) ** 2 + np.abs(y) ** 2
        p = np.abs(x + y) ** 2 / (2.0 * norm)
        p_same[idx] = residual_visibility * p + (1.0 - residual_visibility) * 0.5
    same = u[2] < p_same
    port_A_plus = u[3] < 0.5
    port_B_plus = np.where(same, port_A_plus, ~port_A_plus)
    return PhotonOutcomes(
        arrival_A=arrival_A,
        arrival_B=arrival_B,
        monitored_A=(path_A < 2) & port_A_plus,
        monitored_B=(path_B < 2) & port_B_plus,
        path_A=path_A,
        path_B=path_B,
    )


def propagate_single_pair(
    j: int,
    amplitudes: np.ndarray,
    analyzer: AnalyzerConfig,
    rng: np.random.Generator,
    walk: Optional[np.ndarray] = None,
    bin_spacing: float = 13.0,
) -> Optional[Tuple[float, float]]:
    """Arrival times (t_A, t_B) in ns of one pair created in 1-based bin
    ``j``, or None when either photon misses the monitored port."""
    w = None if walk is None else np.asarray(walk, float).reshape(1, -1)
    out = propagate_pairs(np.array([j - 1]), np.asarray(amplitudes), analyzer, rng, w)
    if not (out.monitored_A[0] and out.monitored_B[0]):
        return None
    return float(out.arrival_A[0] * bin_spacing), float(out.arrival_B[0] * bin_spacing)


# ---------------------------------------------------------------------------
# detection


@dataclass
class _Clicks:
    train: np.ndarray
    time: np.ndarray
    pair: np.ndarray  # -1 for dark counts
    owner: Optional[np.ndarray] = None  # gated darks: index of the opening A click


def _concat_clicks(parts: Sequence[_Clicks]) -> _Clicks:
    owner = None
    if any(p.owner is not None for p in parts):
        owner = np.concatenate(
            [p.owner if p.owner is not None else np.full(p.train.size, -1, np.int64) for p in parts]
        )
    c = _Clicks(
        np.concatenate([p.train for p in parts]),
        np.concatenate([p.time for p in parts]),
        np.concatenate([p.pair for p in parts]),
        owner,
    )
    order = np.argsort(c.train, kind="stable")
    return _Clicks(
        c.train[order], c.time[order], c.pair[order], None if owner is None else owner[order]
    )


def detect(
    pairs: PairBatch,
    outcomes: PhotonOutcomes,
    cfg: ExperimentConfig,
    rng: np.random.Generator,
):
    """Turn analyzer outcomes into coincidence records.

    Photons survive with the detector efficiencies. Detector A is
    free-running with Poissonian darks over the train span and only clicks
    coinciding with the 1-ns t0 comb (``trigger_width``) start the TDC.
    Detector B is either free-running or gated by each accepted A trigger,
    with darks only inside the open gate.

    Returns a structured array with fields train_index (chunk-local),
    t_A, t_B and origin code.
    """
    n = pairs.n_trains
    spacing = cfg.train.bin_spacing
    det_a, det_b = cfg.detector_a, cfg.detector_b
    pair_ids = np.arange(pairs.n_pairs, dtype=np.int64)

    keep_a = outcomes.monitored_A & (rng.random(pairs.n_pairs) < det_a.efficiency)
    keep_b = outcomes.monitored_B & (rng.random(pairs.n_pairs) < det_b.efficiency)
    photons_a = _Clicks(
        pairs.train_index[keep_a], outcomes.arrival_A[keep_a] * spacing, pair_ids[keep_a]
    )
    photons_b = _Clicks(
        pairs.train_index[keep_b], outcomes.arrival_B[keep_b] * spacing, pair_ids[keep_b]
    )

    t0 = -0.5 * spacing
    span = cfg.span
    parts_a = [photons_a]
    if det_a.dark_rate > 0:
        nd = rng.poisson(det_a.dark_rate * span, size=n)
        tr = np.repeat(np.arange(n, dtype=np.int64), nd)
        tt = t0 + span * rng.random(tr.size)
        if cfg.trigger_width is not None:
            off = np.abs(tt - spacing * np.round(tt / spacing))
            ok = off <= 0.5 * cfg.trigger_width
            tr, tt = tr[ok], tt[ok]
        parts_a.append(_Clicks(tr, tt, np.full(tr.size, -1, np.int64)))
    clicks_a = _concat_clicks(parts_a)

    parts_b = [photons_b]
    if det_b.dark_rate > 0:
        if det_b.gated:
            nd = rng.poisson(det_b.dark_rate * det_b.gate_width, size=clicks_a.train.size)
            owner = np.repeat(np.arange(clicks_a.train.size, dtype=np.int64), nd)
            tr = clicks_a.train[owner]
            tt = clicks_a.time[owner] + det_b.gate_width * (rng.random(owner.size) - 0.5)
            parts_b.append(_Clicks(tr, tt, np.full(tr.size, -1, np.int64), owner))
        else:
            nd = rng.poisson(det_b.dark_rate * span, size=n)
            tr = np.repeat(np.arange(n, dtype=np.int64), nd)
            tt = t0 + span * rng.random(tr.size)
            parts_b.append(_Clicks(tr, tt, np.full(tr.size, -1, np.int64)))
    clicks_b = _concat_clicks(parts_b)

    # all (A, B) combinations within each train
    count_b = np.bincount(clicks_b.train, minlength=n)
    start_b = np.cumsum(count_b) - count_b
    per_a = count_b[clicks_a.train]
    total = int(per_a.sum())
    ia = np.repeat(np.arange(clicks_a.train.size, dtype=np.int64), per_a)
    first = np.cumsum(per_a) - per_a
    ib = start_b[clicks_a.train[ia]] + (np.arange(total, dtype=np.int64) - first[ia])

    dt = clicks_a.time[ia] - clicks_b.time[ib]
    ok = np.abs(dt) <= cfg.half_range
    if clicks_b.owner is not None:
        own = clicks_b.owner[ib]
        ok &= (own < 0) | (own == ia)
    ia, ib = ia[ok], ib[ok]

    pa, pb = clicks_a.pair[ia], clicks_b.pair[ib]
    origin = np.full(ia.size, ORIGIN_CODE["dark"], np.int8)
    origin[(pa < 0) & (pb >= 0)] = ORIGIN_CODE["dark_sync"]
    photon = (pa >= 0) & (pb >= 0)
    sep = np.abs(pairs.bin[pa[photon]] - pairs.bin[pb[photon]])
    code = np.where(sep == 0, ORIGIN_CODE["multi_same"], ORIGIN_CODE["multi_far"])
    code = np.where(sep == 1, ORIGIN_CODE["multi_consecutive"], code)
    code = np.where(pa[photon] == pb[photon], ORIGIN_CODE["pair"], code)
    origin[photon] = code

    rec = np.empty(ia.size, RECORD_DTYPE)
    rec["train_index"] = clicks_a.train[ia]
    rec["t_A"] = clicks_a.time[ia]
    rec["t_B"] = clicks_b.time[ib]
    rec["origin"] = origin
    return rec


# ---------------------------------------------------------------------------
# experiment driver


@dataclass
class RunResult:
    histogram: CoincidenceHistogram
    records: Optional[np.ndarray] = None
    n_pairs: int = 0


def _stream_keys(stream) -> tuple:
    return tuple(int(k) for k in stream) if isinstance(stream, (tuple, list)) else (int(stream),)


def _simulate_chunk(cfg: ExperimentConfig, stream, chunk: int, n: int, keep_records: bool):
    rng = rng_stream(cfg.seed, *_stream_keys(stream), chunk)
    train = cfg.train
    pairs = sample_pairs(train, rng, n)
    walk = None
    if cfg.phase_noise_sigma > 0 and pairs.n_pairs:
        rows, inverse = np.unique(pairs.train_index, return_inverse=True)
        walk = phase_walk(cfg.phase_noise_sigma, train.d, rows.size, rng)[inverse]
    amps = build_spdc_state(train).amplitudes
    outcomes = propagate_pairs(
        pairs.bin, amps, cfg.analyzer, rng, walk, cfg.residual_visibility
    )
    rec = detect(pairs, outcomes, cfg, rng)

    hist = CoincidenceHistogram.empty(cfg.hist_bin_width, cfg.half_range, train.bin_spacing)
    dt = rec["t_A"] - rec["t_B"]
    idx = np.rint(dt / cfg.hist_bin_width).astype(np.int64) + hist.n_half
    ok = (idx >= 0) & (idx < hist.counts.size)
    idx, origin = idx[ok], rec["origin"][ok]
    size = hist.counts.size
    hist.counts = np.bincount(idx, minlength=size).astype(np.int64)
    for code, name in enumerate(ORIGINS):
        hist.tagged[name] = np.bincount(idx[origin == code], minlength=size).astype(np.int64)
    hist.total_trains = n
    if keep_records:
        rec["train_index"] += chunk * CHUNK_TRAINS
    else:
        rec = None
    return hist, rec, pairs.n_pairs


def run_experiment(
    cfg: ExperimentConfig, stream=0, workers: int = 1, keep_records: bool = False
) -> RunResult:
    """Simulate ``cfg.n_trains`` trains.

    ``stream`` is an integer or tuple of integers selecting an independent
    RNG stream under ``cfg.seed``.

    The output is bit-identical for a given (seed, stream) regardless of
    ``workers``: trains are cut into fixed chunks, each with its own RNG
    stream, and chunk histograms are merged by integer addition.
    """
    n_chunks = -(-cfg.n_trains // CHUNK_TRAINS)
    sizes = [min(CHUNK_TRAINS, cfg.n_trains - c * CHUNK_TRAINS) for c in range(n_chunks)]

    def job(c):
        return _simulate_chunk(cfg, stream, c, sizes[c], keep_records)

    if workers > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(n_chunks)))
    else:
        results = [job(c) for c in range(n_chunks)]

    hist = results[0][0]
    for h, _, _ in results[1:]:
        hist += h
    records = None
    if keep_records:
        records = np.concatenate([r for _, r, _ in results])
    return RunResult(hist, records, sum(p for _, _, p in results))


def scan_phase(
    cfg: ExperimentConfig,
    theta_values: Sequence[float],
    workers: int = 1,
    stream_prefix: tuple = (),
) -> FringeScan:
    """Coincidence fringe versus theta = delta_A + delta_B - delay * phi.

    Point i uses RNG stream ``(*stream_prefix, i + 1)`` of ``cfg.seed``. The returned scan carries
    the dt = 0 window counts, the +/- delay side-peak counts, the estimated
    accidental background per point and the scan-summed histogram.
    """
    from .analysis import estimate_accidentals

    theta_values = [float(t) for t in theta_values]
    if not theta_values:
        raise ValueError("theta_values must not be empty")
    step = pump_phase_step(cfg.train)
    side_lag = cfg.analyzer.delay_bins * cfg.train.bin_spacing
    w = cfg.coincidence_window
    counts, side, acc = [], [], []
    total = None
    for i, theta in enumerate(theta_values):
        point = replace(cfg, analyzer=cfg.analyzer.with_phase(theta, step))
        hist = run_experiment(point, stream=(*stream_prefix, i + 1), workers=workers).histogram
        counts.append(hist.window(0.0, w))
        side.append(hist.window(side_lag, w) + hist.window(-side_lag, w))
        try:
            acc.append(estimate_accidentals(hist, w).level)
        except ValueError:
            acc.append(0.0)
        if total is None:
            total = hist
        else:
            total += hist
    return FringeScan(
        theta=np.array(theta_values),
        counts=np.array(counts, dtype=np.int64),
        exposure=cfg.n_trains,
        accidental_level=float(np.mean(acc)),
        side_counts=np.array(side, dtype=np.int64),
        accidentals=np.array(acc),
        histogram=total,
    )
