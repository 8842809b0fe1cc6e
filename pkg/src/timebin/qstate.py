"""Amplitude-level model of a d-dimensional time-bin biphoton and its
evolution through an unbalanced two-arm analyzer.

Time bins are numbered from 1 as in the usual |j, j> notation. A photon
entering the analyzer in bin j leaves in bin j through the short arm or in
bin j + delay_bins through the long arm, and then exits one of two output
ports (+1 or -1) of the recombining 50/50 splitter. Only the ``(+1, +1)``
port pair is monitored by default; everything else (the other port
combinations and any arm loss) is reported as the loss fraction.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Tuple

import numpy as np

NORM_TOL = 1e-12

__all__ = [
    "PumpTrain",
    "BiphotonState",
    "AnalyzerConfig",
    "JointOutcomeTable",
    "NormalizationError",
    "make_uniform_train",
    "make_envelope_train",
    "build_spdc_state",
    "apply_analyzer",
    "coincidence_rate",
    "fringe_visibility",
]


class NormalizationError(ValueError):
    """Amplitudes do not satisfy sum |c_j|^2 = 1."""


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PumpTrain:
    """A train of d phase-locked pump pulses.

    ``amplitudes`` are the real pulse amplitudes c_j (normalized so that
    sum c_j^2 = 1), ``phases`` the pulse phases phi_j with phi_1 = 0,
    ``bin_spacing`` the pulse period in ns and ``mu`` the mean number of
    pairs created per pulse.
    """

    amplitudes: np.ndarray
    phases: np.ndarray
    bin_spacing: float = 13.0
    mu: float = 0.0

    def __post_init__(self):
        amps = _frozen_array(self.amplitudes, float)
        phases = _frozen_array(self.phases, float)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "phases", phases)
        if amps.size < 1:
            raise ValueError("d >= 1 required")
        if phases.size != amps.size:
            raise ValueError("amplitudes and phases must have the same length")
        if np.any(amps < 0) or not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite and non-negative")
        if abs(float(np.sum(amps**2)) - 1.0) > NORM_TOL:
            raise NormalizationError(
                f"sum c_j^2 = {np.sum(amps**2)!r}, expected 1 within {NORM_TOL}"
            )
        if phases[0] != 0.0:
            raise ValueError("phase reference violated: phi_1 must be 0")
        if not self.bin_spacing > 0:
            raise ValueError("bin_spacing must be > 0")
        if not self.mu >= 0:
            raise ValueError("mu must be >= 0")

    @property
    def d(self) -> int:
        return int(self.amplitudes.size)

    @property
    def intensities(self) -> np.ndarray:
        return self.amplitudes**2


def make_uniform_train(
    d: int, phase_step: float = 0.0, mu: float = 0.0, spacing: float = 13.0
) -> PumpTrain:
    """Equal amplitudes 1/sqrt(d) and a constant phase step between pulses."""
    if int(d) != d or d < 1:
        raise ValueError(f"d >= 1 required, got {d!r}")
    d = int(d)
    amps = np.full(d, 1.0 / math.sqrt(d))
    # renormalize so that rounding in 1/sqrt(d) cannot trip the 1e-12 check
    amps /= math.sqrt(float(np.sum(amps**2)))
    phases = phase_step * np.arange(d, dtype=float)
    return PumpTrain(amps, phases, bin_spacing=spacing, mu=mu)


def make_envelope_train(
    d: int,
    phase_step: float = 0.0,
    mu: float = 0.0,
    spacing: float = 13.0,
    edge_attenuation: float = 1.0,
) -> PumpTrain:
    """Uniform train whose first and last pulses carry ``edge_attenuation``
    of the interior pulse intensity (finite modulator rise time)."""
    if not 0.0 < edge_attenuation <= 1.0:
        raise ValueError(f"edge_attenuation must lie in (0, 1], got {edge_attenuation!r}")
    if int(d) != d or d < 1:
        raise ValueError(f"d >= 1 required, got {d!r}")
    d = int(d)
    if edge_attenuation == 1.0:
        return make_uniform_train(d, phase_step, mu, spacing)
    amps = np.ones(d)
    amps[0] *= math.sqrt(edge_attenuation)
    amps[-1] *= math.sqrt(edge_attenuation)
    amps /= math.sqrt(float(np.sum(amps**2)))
    phases = phase_step * np.arange(d, dtype=float)
    return PumpTrain(amps, phases, bin_spacing=spacing, mu=mu)


@dataclass(frozen=True)
class BiphotonState:
    """Complex amplitudes a_j over the time-bin basis |j, j>."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = _frozen_array(self.amplitudes, complex)
        if amps.size < 1:
            raise ValueError("state needs at least one time bin")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return int(self.amplitudes.size)

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm2 - 1.0) <= tol


def build_spdc_state(train: PumpTrain) -> BiphotonState:
    """a_j = c_j exp(i phi_j)."""
    return BiphotonState(train.amplitudes * np.exp(1j * train.phases))


@dataclass(frozen=True)
class AnalyzerConfig:
    """Two-arm analyzer shared by both photons.

    ``t_s`` and ``t_l`` are amplitude transmissions of the short and long
    arm; ``t_s**2 + t_l**2 == 1`` is lossless and ``t_s == t_l == 1/sqrt(2)``
    the balanced reference. ``t_s_b``/``t_l_b`` override the transmissions
    seen by photon B (default: shared). ``delay_bins`` is 1 for the physical
    analyzer; larger values are only meant for coherence diagnostics.
    """

    delta_A: float = 0.0
    delta_B: float = 0.0
    t_s: float = 1.0 / math.sqrt(2.0)
    t_l: float = 1.0 / math.sqrt(2.0)
    delay_bins: int = 1
    t_s_b: float | None = None
    t_l_b: float | None = None

    def __post_init__(self):
        for name in ("t_s", "t_l", "t_s_b", "t_l_b"):
            val = getattr(self, name)
            if val is None:
                continue
            if not 0.0 < val <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {val!r}")
        for name in ("A", "B"):
            ts, tl = self.transmissions(name)
            if ts**2 + tl**2 > 1.0 + NORM_TOL:
                raise ValueError(f"arm transmissions for photon {name} exceed unity")
        if int(self.delay_bins) != self.delay_bins or self.delay_bins < 1:
            raise ValueError("delay_bins must be a positive integer")

    @classmethod
    def from_imbalance_db(
        cls, imbalance_db: float, delta_A: float = 0.0, delta_B: float = 0.0, **kw
    ) -> "AnalyzerConfig":
        """Lossless analyzer whose long arm transmits ``imbalance_db`` dB
        less intensity than the short arm."""
        ratio = 10.0 ** (-imbalance_db / 10.0)  # t_l^2 / t_s^2
        t_s = math.sqrt(1.0 / (1.0 + ratio))
        t_l = math.sqrt(ratio / (1.0 + ratio))
        return cls(delta_A=delta_A, delta_B=delta_B, t_s=t_s, t_l=t_l, **kw)

    def transmissions(self, photon: str) -> Tuple[float, float]:
        if photon == "A":
            return self.t_s, self.t_l
        ts = self.t_s if self.t_s_b is None else self.t_s_b
        tl = self.t_l if self.t_l_b is None else self.t_l_b
        return ts, tl

    def with_phase(self, theta: float, phase_step: float = 0.0) -> "AnalyzerConfig":
        """Copy with delta_A chosen so that delta_A + delta_B - m*phase_step = theta."""
        return replace(self, delta_A=theta + self.delay_bins * phase_step - self.delta_B)


@dataclass(frozen=True)
class JointOutcomeTable:
    """Outcome amplitudes keyed by (arrival bin of photon A, t_A - t_B in bins)."""

    amplitudes: Dict[Tuple[int, int], complex]
    loss: float
    delay_bins: int = 1
    ports: Tuple[int, int] = (1, 1)
    probabilities: Dict[Tuple[int, int], float] = field(init=False)

    def __post_init__(self):
        probs = {key: abs(amp) ** 2 for key, amp in self.amplitudes.items()}
        object.__setattr__(self, "probabilities", probs)

    @property
    def total(self) -> float:
        return math.fsum(self.probabilities.values())

    def dt_probability(self, dt: int) -> float:
        return math.fsum(p for (k, t), p in self.probabilities.items() if t == dt)

    def bin_probabilities(self, dt: int = 0) -> Dict[int, float]:
        return {k: p for (k, t), p in sorted(self.probabilities.items()) if t == dt}


def _port_amplitudes(cfg: AnalyzerConfig, photon: str, port: int):
    ts, tl = cfg.transmissions(photon)
    delta = cfg.delta_A if photon == "A" else cfg.delta_B
    s = ts / math.sqrt(2.0)
    l = port * tl * cmath.exp(1j * delta) / math.sqrt(2.0)
    return s, l


def apply_analyzer(
    state: BiphotonState, cfg: AnalyzerConfig, ports: Tuple[int, int] = (1, 1)
) -> JointOutcomeTable:
    """Propagate ``state`` through the analyzer and project on ``ports``.

    Each source bin j feeds four path pairs (ss, sl, ls, ll); amplitudes that
    land on the same (arrival bin, dt) are summed coherently. For dt = 0 the
    ss term from bin k and the ll term from bin k - delay interfere.
    """
    if ports[0] not in (1, -1) or ports[1] not in (1, -1):
        raise ValueError("ports must be +1 or -1")
    m = cfg.delay_bins
    sA, lA = _port_amplitudes(cfg, "A", ports[0])
    sB, lB = _port_amplitudes(cfg, "B", ports[1])
    out: Dict[Tuple[int, int], complex] = {}
    for idx, a in enumerate(state.amplitudes):
        j = idx + 1
        for key, factor in (
            ((j, 0), sA * sB),
            ((j + m, 0), lA * lB),
            ((j, -m), sA * lB),
            ((j + m, m), lA * sB),
        ):
            out[key] = out.get(key, 0j) + a * factor
    total = math.fsum(abs(v) ** 2 for v in out.values())
    return JointOutcomeTable(out, loss=1.0 - total, delay_bins=m, ports=tuple(ports))


def coincidence_rate(state: BiphotonState, cfg: AnalyzerConfig) -> float:
    """Probability of a monitored coincidence with t_A = t_B, summed over
    all arrival bins (no post-selection of the interfering terms)."""
    return apply_analyzer(state, cfg).dt_probability(0)


def fringe_visibility(state: BiphotonState, cfg: AnalyzerConfig) -> float:
    """Exact visibility of ``coincidence_rate`` as delta_A + delta_B is scanned.

    The rate is A + B cos(x) + C sin(x) in the summed analyzer phase x, so
    three evaluations determine the fringe exactly.
    """
    base = cfg.delta_A + cfg.delta_B
    r = [
        coincidence_rate(state, replace(cfg, delta_A=cfg.delta_A - base + x))
        for x in (0.0, 0.5 * math.pi, math.pi)
    ]
    mean = 0.5 * (r[0] + r[2])
    b = 0.5 * (r[0] - r[2])
    c = r[1] - mean
    return math.hypot(b, c) / mean
