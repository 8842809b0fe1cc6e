"""From coincidence histograms and fringe scans to visibilities and mu.

Side-peak estimate of mu
------------------------
With zero timing jitter every photon-photon coincidence falls on a lag
l * dtau. Let w_X(u) be the probability that photon X takes arm u
(short u=0, long u=1), m the analyzer delay in bins and P(x) the
probability that two independent pairs are born x bins apart
(``P(x) = sum_j c_j^2 c_{j-x}^2``). Averaged over the analyzer phase, the
expected counts at lag l are, up to one common factor (detection
efficiencies and port selection),

    C_l = mu d S_l + mu^2 G_l
    S_l = sum_{m(uA-uB) = l} w_A(uA) w_B(uB)
    G_l = d^2 sum_{uA,uB} w_A(uA) w_B(uB) P(l - m(uA - uB))

The first term comes from the two photons of one pair, the second from
photons of different pairs (E[N(N-1)] = (mu d)^2). Lags other than 0 and
+/-m are populated only by the second term. Taking the ratio r of the far
lags F to the first side peaks N = {-m, +m}, which are both independent of
the analyzer phase,

    r = mu G_F / (d S_N + mu G_N)   =>   mu = r d S_N / (G_F - r G_N).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .noise import analytic_visibility_d, visibility_budget
from .qstate import AnalyzerConfig, PumpTrain, make_uniform_train
from .records import CoincidenceHistogram, FringeScan

__all__ = [
    "FitResult",
    "AccidentalEstimate",
    "MuEstimate",
    "FitSingularError",
    "DataInconsistencyError",
    "EstimatorUnavailableError",
    "InsufficientStatisticsError",
    "window_counts",
    "fit_fringe",
    "net_visibility",
    "estimate_accidentals",
    "sidepeak_geometry",
    "estimate_mu_sidepeak",
    "fit_report",
    "fit_vmax",
    "SweepRow",
    "SweepResult",
    "default_thetas",
    "dimension_sweep",
    "multipair_sweep",
]


class FitSingularError(ValueError):
    pass


class DataInconsistencyError(ValueError):
    pass


class EstimatorUnavailableError(ValueError):
    pass


class InsufficientStatisticsError(ValueError):
    def __init__(self, message: str, min_mu: float):
        super().__init__(message)
        self.min_mu = min_mu


def window_counts(hist: CoincidenceHistogram, center: float, width: float) -> int:
    """Counts with |dt - center| <= width / 2."""
    if not width > 0:
        raise ValueError("width must be > 0")
    if hist.total == 0:
        warnings.warn("empty histogram", RuntimeWarning, stacklevel=2)
        return 0
    if abs(center) - 0.5 * width > hist.half_range:
        raise ValueError("window lies outside the histogram span")
    return hist.window(center, width)


# ---------------------------------------------------------------------------
# fringe fitting


@dataclass(frozen=True)
class FitResult:
    visibility: float
    visibility_err: float
    phase_offset: float
    mean_level: float
    mean_level_err: float
    goodness: float  # reduced chi-square
    cov_vm: float = 0.0  # covariance of visibility and mean_level

    @property
    def reduced_chisq(self) -> float:
        return self.goodness


def fit_fringe(scan: FringeScan) -> FitResult:
    """Weighted least squares of C(theta) = M (1 + V cos(theta - theta0)).

    Solved in the linear form a + b cos(theta) + c sin(theta) with Poisson
    weights 1 / max(count, 1), so M = a, V = hypot(b, c) / a and
    theta0 = atan2(c, b).
    """
    theta = np.asarray(scan.theta, float)
    y = np.asarray(scan.counts, float)
    points = np.round(np.column_stack([np.cos(theta), np.sin(theta)]), 9)
    if np.unique(points, axis=0).shape[0] < 3:
        raise FitSingularError("need at least 3 distinct phases modulo 2 pi")
    X = np.column_stack([np.ones_like(theta), np.cos(theta), np.sin(theta)])
    w = 1.0 / np.maximum(y, 1.0)
    A = X.T @ (w[:, None] * X)
    if np.linalg.cond(A) > 1e12:
        raise FitSingularError("degenerate phase design")
    cov = np.linalg.inv(A)
    a, b, c = cov @ (X.T @ (w * y))
    if a <= 0:
        raise DataInconsistencyError(f"best-fit mean level {a!r} is not positive")
    r = math.hypot(b, c)
    V = r / a
    if r > 0:
        grad = np.array([-r / a**2, b / (r * a), c / (r * a)])
        v_var = float(grad @ cov @ grad)
        cov_vm = float(grad @ cov[:, 0])
    else:
        v_var = 0.5 * (cov[1, 1] + cov[2, 2]) / a**2
        cov_vm = 0.0
    resid = y - X @ np.array([a, b, c])
    dof = y.size - 3
    chi2 = float(np.sum(w * resid**2))
    return FitResult(
        visibility=float(V),
        visibility_err=math.sqrt(max(v_var, 0.0)),
        phase_offset=math.atan2(c, b),
        mean_level=float(a),
        mean_level_err=math.sqrt(cov[0, 0]),
        goodness=chi2 / dof if dof > 0 else float("nan"),
        cov_vm=cov_vm,
    )


def net_visibility(fit: FitResult, accidental_level: float, accidental_err: float = 0.0):
    """Visibility after removing a flat background: V M / (M - A).

    Returns ``(value, err)``.
    """
    M, V, A = fit.mean_level, fit.visibility, accidental_level
    if A < 0:
        raise ValueError("accidental_level must be >= 0")
    if A >= M:
        raise ValueError("accidental level exceeds the fitted mean level")
    scale = M / (M - A)
    dV = scale
    dM = -V * A / (M - A) ** 2
    dA = V * M / (M - A) ** 2
    var = (
        dV**2 * fit.visibility_err**2
        + dM**2 * fit.mean_level_err**2
        + 2 * dV * dM * fit.cov_vm
        + dA**2 * accidental_err**2
    )
    return V * scale, math.sqrt(max(var, 0.0))


def fit_report(fit: FitResult, accidentals: float = 0.0) -> dict:
    """JSON-ready fit summary."""
    return {
        "visibility": fit.visibility,
        "visibility_err": fit.visibility_err,
        "phase_offset": fit.phase_offset,
        "mean_level": fit.mean_level,
        "accidentals": accidentals,
        "reduced_chisq": fit.goodness,
    }


def write_fit_report(path, fit: FitResult, accidentals: float = 0.0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fit_report(fit, accidentals), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# accidentals


@dataclass(frozen=True)
class AccidentalEstimate:
    """Flat background expected inside the dt = 0 window.

    ``tagged`` is the simulated count of coincidences whose B click was a
    dark count (the flat component), ``tagged_sync`` those started by a dark
    A trigger; the latter sits on the peaks and is invisible off-peak.
    """

    level: float
    err: float
    tagged: Optional[int] = None
    tagged_sync: Optional[int] = None


def estimate_accidentals(data, window: float = 1.0, guard: Optional[float] = None):
    """Estimate the flat background under the dt = 0 window from the
    off-peak parts of a histogram, or per point for a ``FringeScan``."""
    if isinstance(data, FringeScan):
        if data.histogram is None:
            return AccidentalEstimate(float(data.accidental_level), 0.0)
        est = estimate_accidentals(data.histogram, window, guard)
        k = data.theta.size
        return replace(est, level=est.level / k, err=est.err / k)
    hist: CoincidenceHistogram = data
    guard = window if guard is None else guard
    mask = hist.offpeak_mask(guard)
    if not mask.any():
        raise EstimatorUnavailableError("histogram has no off-peak region")
    off_counts = int(hist.counts[mask].sum())
    off_width = float(mask.sum()) * hist.bin_width
    win = hist.window_width(0.0, window)
    level = off_counts / off_width * win
    err = math.sqrt(off_counts) / off_width * win
    tagged = tagged_sync = None
    if "dark" in hist.tagged:
        tagged = hist.window(0.0, window, origin="dark")
        tagged_sync = hist.window(0.0, window, origin="dark_sync")
    return AccidentalEstimate(level, err, tagged, tagged_sync)


# ---------------------------------------------------------------------------
# side-peak mu estimation


def sidepeak_geometry(
    intensities: Sequence[float], analyzer: Optional[AnalyzerConfig], lags: Sequence[int]
):
    """Self (S_l) and cross-pair (G_l) lag weights; see the module docstring."""
    analyzer = analyzer or AnalyzerConfig()
    c2 = np.asarray(intensities, float)
    d = c2.size
    m = analyzer.delay_bins
    tsA, tlA = analyzer.transmissions("A")
    tsB, tlB = analyzer.transmissions("B")
    wA = (tsA**2, tlA**2)
    wB = (tsB**2, tlB**2)
    pdiff = np.convolve(c2, c2[::-1])  # index x + d - 1

    def P(x):
        return float(pdiff[x + d - 1]) if abs(x) < d else 0.0

    S, G = [], []
    for l in lags:
        s = g = 0.0
        for uA in (0, 1):
            for uB in (0, 1):
                shift = m * (uA - uB)
                ww = wA[uA] * wB[uB]
                if shift == l:
                    s += ww
                g += ww * P(l - shift)
        S.append(s)
        G.append(d * d * g)
    return np.array(S), np.array(G)


@dataclass(frozen=True)
class MuEstimate:
    mu: float
    err: float
    ratio: float
    far_counts: float
    near_counts: float
    far_lags: tuple


def estimate_mu_sidepeak(
    hist: CoincidenceHistogram,
    d: int,
    window: float = 1.0,
    intensities: Optional[Sequence[float]] = None,
    analyzer: Optional[AnalyzerConfig] = None,
) -> MuEstimate:
    """Mean pair number per pulse from the side-peak ratio.

    ``hist`` should be phase-independent in its side peaks, which holds for
    single runs and for scan-summed histograms alike. Defaults assume a
    uniform train and a balanced analyzer.
    """
    if d < 2:
        raise ValueError("side-peak estimate needs d >= 2")
    if intensities is None:
        intensities = np.full(d, 1.0 / d)
    analyzer = analyzer or AnalyzerConfig()
    m = analyzer.delay_bins
    spacing = hist.bin_spacing
    lags = [int(l) for l in hist.peak_lags() if abs(l) * spacing + 0.5 * window <= hist.half_range]
    near = [l for l in (-m, m) if l in lags]
    far = [l for l in lags if l not in (0, -m, m)]
    S_far, G_far = sidepeak_geometry(intensities, analyzer, far)
    far = [l for l, g in zip(far, G_far) if g > 0]
    if not near or not far:
        raise EstimatorUnavailableError("histogram span does not reach the side peaks")
    S_near, G_near = sidepeak_geometry(intensities, analyzer, near)
    _, G_far = sidepeak_geometry(intensities, analyzer, far)
    sN, gN, gF = float(S_near.sum()), float(G_near.sum()), float(G_far.sum())

    try:
        bg = estimate_accidentals(hist, window)
        bg_level, bg_err = bg.level, bg.err
    except EstimatorUnavailableError:
        bg_level = bg_err = 0.0
    raw_far = sum(hist.window(l * spacing, window) for l in far)
    raw_near = sum(hist.window(l * spacing, window) for l in near)
    c_far = raw_far - len(far) * bg_level
    c_near = raw_near - len(near) * bg_level
    var_far = raw_far + (len(far) * bg_err) ** 2
    var_near = raw_near + (len(near) * bg_err) ** 2
    floor = 3.0 * math.sqrt(max(var_far, 1.0))

    def mu_of(r):
        den = gF - r * gN
        return r * d * sN / den if den > 0 else math.inf

    if c_near <= 0 or c_far < floor:
        min_mu = mu_of(floor / c_near) if c_near > 0 else math.inf
        raise InsufficientStatisticsError(
            f"far side peaks ({c_far:.1f} counts) below the 3-sigma floor ({floor:.1f})", min_mu
        )
    r = c_far / c_near
    mu = mu_of(r)
    r_err = r * math.sqrt(var_far / c_far**2 + var_near / c_near**2)
    dmu_dr = d * sN * gF / (gF - r * gN) ** 2
    return MuEstimate(mu, dmu_dr * r_err, r, c_far, c_near, tuple(far))


# ---------------------------------------------------------------------------
# figure reproductions


@dataclass(frozen=True)
class SweepRow:
    x: float
    v_net: float
    v_err: float
    v_raw: float
    prediction: float
    fit: FitResult


@dataclass
class SweepResult:
    rows: List[SweepRow]
    v_max: float = float("nan")
    v_max_err: float = float("nan")
    scans: list = field(default_factory=list)


def default_thetas(n: int = 12) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def fit_vmax(d_values, v, v_err):
    """One-parameter weighted fit of V = v_max (d - 1) / d."""
    x = np.array([(d - 1) / d for d in d_values], float)
    v = np.asarray(v, float)
    e = np.asarray(v_err, float)
    ok = (x > 0) & (e > 0)
    if not ok.any():
        raise FitSingularError("no row with d >= 2 and a finite error")
    w = 1.0 / e[ok] ** 2
    sxx = float(np.sum(w * x[ok] ** 2))
    return float(np.sum(w * x[ok] * v[ok]) / sxx), 1.0 / math.sqrt(sxx)


def _uniform_like(train: PumpTrain) -> Callable[[int], PumpTrain]:
    from .montecarlo import pump_phase_step

    step = pump_phase_step(train)
    return lambda d: make_uniform_train(d, step, train.mu, train.bin_spacing)


def _prediction(cfg, d: int, mu: float) -> float:
    an = cfg.analyzer
    v = visibility_budget(d, mu, an.t_s, an.t_l, cfg.phase_noise_sigma, cfg.residual_visibility)
    return v.v_total


def _sweep_point(cfg, thetas, stream_prefix, workers):
    from .montecarlo import scan_phase

    scan = scan_phase(cfg, thetas, workers=workers, stream_prefix=stream_prefix)
    fit = fit_fringe(scan)
    acc = estimate_accidentals(scan, cfg.coincidence_window)
    v_net, v_err = net_visibility(fit, acc.level, acc.err)
    return scan, fit, v_net, v_err


def dimension_sweep(
    base,
    d_values: Sequence[int] = tuple(range(1, 21)),
    n_phases: int = 12,
    train_factory: Optional[Callable[[int], PumpTrain]] = None,
    workers: int = 1,
    keep_scans: bool = False,
) -> SweepResult:
    """Net visibility versus d plus the fitted v_max of V = v_max (d-1)/d.

    ``base`` is an ExperimentConfig whose train provides mu, spacing and
    phase step; each d gets its own RNG stream prefix.
    """
    factory = train_factory or _uniform_like(base.train)
    thetas = default_thetas(n_phases)
    rows, scans = [], []
    for i, d in enumerate(d_values):
        cfg = replace(base, train=factory(int(d)))
        scan, fit, v_net, v_err = _sweep_point(cfg, thetas, (1000 + i,), workers)
        rows.append(SweepRow(d, v_net, v_err, fit.visibility, _prediction(cfg, d, cfg.train.mu), fit))
        if keep_scans:
            scans.append(scan)
    v_max, v_max_err = fit_vmax([r.x for r in rows], [r.v_net for r in rows], [r.v_err for r in rows])
    return SweepResult(rows, v_max, v_max_err, scans)


def multipair_sweep(
    base,
    mu_values: Sequence[float] = (0.05, 0.1, 0.2, 0.3, 0.5),
    n_phases: int = 12,
    workers: int = 1,
    keep_scans: bool = False,
) -> SweepResult:
    """Net visibility versus mu at the dimension of ``base.train``."""
    thetas = default_thetas(n_phases)
    rows, scans = [], []
    d = base.train.d
    for i, mu in enumerate(mu_values):
        cfg = replace(base, train=replace(base.train, mu=float(mu)))
        scan, fit, v_net, v_err = _sweep_point(cfg, thetas, (2000 + i,), workers)
        rows.append(SweepRow(mu, v_net, v_err, fit.visibility, _prediction(cfg, d, mu), fit))
        if keep_scans:
            scans.append(scan)
    return SweepResult(rows, scans=scans)


def analytic_dimension_curve(d_values: Sequence[int], v_max: float = 1.0):
    """Reference curve for the dimension sweep."""
    return np.array([analytic_visibility_d(int(d), v_max) for d in d_values])
