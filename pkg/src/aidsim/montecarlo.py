"""Monte Carlo simulation of SOS and AID magnetic-resonance experiments.

A *run* is ``n`` repeats at one protocol point; its observable is the summed
photon count. Every (experiment, point) pair owns an independent random
stream derived from the global seed, so results do not depend on how work
is split over threads.

Sampling shortcuts (exact in distribution):

* the sum of ``n`` iid ``Poisson(k)`` draws is drawn as ``Poisson(n k)``;
* while the capture probability is constant over a block of ``m`` repeats,
  the captured carriers in that block are ``Binomial(m, p q lambda)``;
* the photons of ``A`` activated ancillas are ``Poisson(A k_a)``.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .sensitivity import QubitReadoutParams, TimingBudget
from .stochastics import RngStream

log = logging.getLogger(__name__)

__all__ = [
    "ResponseKind",
    "SpinResponse",
    "LambdaSchedule",
    "ExperimentConfig",
    "Spectrum",
    "SNREstimate",
    "SensitivityPoint",
    "spin_response_value",
    "simulate_sos",
    "simulate_aid",
    "estimate_snr",
    "sensitivity_curve",
    "aid_run_moments",
    "default_curve_timing",
    "fit_lorentzian",
]


class ResponseKind(str, Enum):
    ODMR_LORENTZIAN = "odmr"
    RABI = "rabi"
    HAHN_ECHO = "echo"


@dataclass(frozen=True)
class SpinResponse:
    """Spin population ``|u_1|^2`` transferred at each protocol point.

    ODMR points are microwave frequencies (Hz); Rabi points are pulse
    durations (s); echo points are the free-evolution time ``tau`` (s).
    The Rabi and echo envelopes are phenomenological:

    * Rabi: ``sin^2(pi f_rabi t) exp(-t / decay)``
    * echo: ``(1 - exp(-(2 tau / decay)^3)) / 2`` (full refocusing at
      ``tau = 0``, decay to a mixed state)
    """

    kind: ResponseKind = ResponseKind.ODMR_LORENTZIAN
    center_freq: float = 2.87e9
    fwhm: float = 7e6
    rabi_freq: float = 5e6
    decay_time: float = 2e-6

    def __post_init__(self):
        object.__setattr__(self, "kind", ResponseKind(self.kind))
        if self.fwhm <= 0:
            raise ValueError("fwhm must be > 0")
        if self.decay_time <= 0:
            raise ValueError("decay_time must be > 0")
        if self.rabi_freq < 0:
            raise ValueError("rabi_freq must be >= 0")


def spin_response_value(response: SpinResponse, point):
    """``|u_1|^2`` in [0, 1] at ``point`` (scalar or array)."""
    x = np.asarray(point, dtype=float)
    if response.kind is ResponseKind.ODMR_LORENTZIAN:
        u = 2.0 * (x - response.center_freq) / response.fwhm
        out = 1.0 / (1.0 + u * u)
    else:
        if np.any(x < 0):
            raise ValueError("protocol durations must be >= 0")
        if response.kind is ResponseKind.RABI:
            out = np.sin(np.pi * response.rabi_freq * x) ** 2 * np.exp(-x / response.decay_time)
        else:
            out = 0.5 * (1.0 - np.exp(-((2.0 * x / response.decay_time) ** 3)))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


class LambdaSchedule:
    """Piecewise-constant capture probability ``lambda(i)`` for repeats ``i = 1, 2, ...``.

    Stored as block ends ``ends`` (last repeat index of each block) and the
    block values. A constant schedule has a single unbounded block.
    """

    def __init__(self, ends: Sequence[float], values: Sequence[float], tol: float = 1e-9):
        ends = np.asarray(ends, dtype=float)
        values = np.asarray(values, dtype=float)
        if ends.shape != values.shape or ends.size == 0:
            raise ValueError("schedule needs matching, nonempty ends and values")
        if np.any(np.diff(ends) <= 0) or ends[0] < 1:
            raise ValueError("block ends must be increasing repeat indices >= 1")
        if np.any(~np.isfinite(values[np.isfinite(ends)])) or np.any(values < -tol) or np.any(values > 1 + tol):
            bad = values[(values < -tol) | (values > 1 + tol) | ~np.isfinite(values)]
            raise ValueError(f"lambda_eff values outside [0, 1]: {bad[:5]}")
        self.ends = ends
        self.values = np.clip(values, 0.0, 1.0)

    @classmethod
    def constant(cls, value: float) -> "LambdaSchedule":
        return cls([math.inf], [value])

    @classmethod
    def from_values(cls, per_repeat: Sequence[float]) -> "LambdaSchedule":
        """One value per repeat, ``per_repeat[i-1]`` for repeat ``i``."""
        v = np.asarray(per_repeat, dtype=float)
        return cls(np.arange(1, v.size + 1), v)

    @classmethod
    def from_curve(cls, cycles: Sequence[float], lambda_eff: Sequence[float]) -> "LambdaSchedule":
        """From activation sampling points: ``lambda_eff[k]`` covers ``(cycles[k], cycles[k+1]]``.

        Interval ends are rounded to whole repeats; zero-length blocks are
        dropped. If the first sample lies after cycle 0, the first value also
        covers the repeats before it.
        """
        cycles = np.round(np.asarray(cycles, dtype=float))
        lam = np.asarray(lambda_eff, dtype=float)
        if lam.size != cycles.size - 1:
            raise ValueError("need one lambda_eff value per sampling interval")
        cycles = cycles.copy()
        cycles[0] = 0.0
        keep = np.diff(cycles) > 0
        return cls(cycles[1:][keep], lam[keep])

    @classmethod
    def from_csv(cls, path) -> "LambdaSchedule":
        """Read the activation table written by the ``pde`` command."""
        cycles, lam = [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                cycles.append(float(row["cycle"]))
                lam.append(float(row["lambda_eff"]))
        if len(cycles) < 2:
            raise ValueError(f"{path}: need at least two activation samples")
        return cls.from_curve(cycles, lam[1:])

    @property
    def length(self) -> float:
        return float(self.ends[-1])

    def blocks(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Block lengths and values covering repeats ``1..n`` exactly."""
        if n > self.length:
            raise ValueError(f"lambda schedule covers {self.length:.0f} repeats, {n} requested")
        ends = np.minimum(self.ends, n)
        starts = np.concatenate([[0.0], ends[:-1]])
        lengths = (ends - starts).astype(np.int64)
        keep = lengths > 0
        return lengths[keep], self.values[keep]

    def per_repeat(self, n: int) -> np.ndarray:
        lengths, values = self.blocks(n)
        return np.repeat(values, lengths)

    def mean(self, n: int) -> float:
        lengths, values = self.blocks(n)
        return float(np.dot(lengths, values) / n)


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulated experiment: readout model, protocol sweep and run counts.

    ``contrast_aid`` maps the spin response onto the qubit ionisation
    probability, ``q(point) = q0 (1 - contrast_aid |u_1|^2)``. ``runs`` is the
    number of independent runs per point.
    """

    qubit: QubitReadoutParams = field(default_factory=QubitReadoutParams)
    timing: TimingBudget = field(default_factory=lambda: default_curve_timing())
    response: SpinResponse = field(default_factory=SpinResponse)
    sweep: Tuple[float, ...] = (2.87e9,)
    n: int = 10_000
    lambda_schedule: Union[LambdaSchedule, float] = 1.0
    background_defects: int = 0
    q_w: float = 0.8
    contrast_aid: float = 0.36
    runs: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sweep", tuple(float(x) for x in self.sweep))
        if not self.sweep:
            raise ValueError("sweep must contain at least one protocol point")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be an integer >= 1, got {self.n!r}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.background_defects < 0:
            raise ValueError("background_defects must be >= 0")
        if not 0 <= self.q_w <= 1 or not 0 <= self.contrast_aid <= 1:
            raise ValueError("q_w and contrast_aid must lie in [0, 1]")
        if not isinstance(self.lambda_schedule, LambdaSchedule):
            object.__setattr__(self, "lambda_schedule", LambdaSchedule.constant(float(self.lambda_schedule)))

    def sos_mean(self, point) -> float:
        """Mean photons per repeat at ``point``."""
        u = spin_response_value(self.response, point)
        k0, k1 = self.qubit.k0_mean, self.qubit.k1_mean
        return k0 + (k1 - k0) * u

    def aid_q(self, point) -> float:
        u = spin_response_value(self.response, point)
        return self.qubit.q0_mean * (1.0 - self.contrast_aid * u)


def default_curve_timing() -> TimingBudget:
    """SCC pulse 100 ns, spin evolution 15 us, 10 ms wide-field ancilla init + readout."""
    return TimingBudget(t_e=15e-6, t_scc=100e-9, t_ia=5e-3, t_ra=5e-3)


@dataclass
class Spectrum:
    """Summed counts per run (rows) and protocol point (columns)."""

    points: np.ndarray
    counts: np.ndarray
    n: int
    seed: int

    @property
    def mean(self) -> np.ndarray:
        return self.counts.mean(axis=0)

    def rows(self):
        """``(point, counts of run 0, runs, seed)`` tuples for tabular output."""
        return [(p, int(c), self.counts.shape[0], self.seed) for p, c in zip(self.points, self.counts[0])]


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _sos_point(config: ExperimentConfig, index: int, point: float, tag: str) -> np.ndarray:
    rng = RngStream(config.seed, tag, index).generator
    return rng.poisson(config.n * config.sos_mean(point), size=config.runs)


def simulate_sos(config: ExperimentConfig, threads: int = 1, stream: str = "sos") -> Spectrum:
    """Summed SOS photon counts for every sweep point and run."""
    if config.qubit.k0_mean < 0:
        raise ValueError("k0_mean must be >= 0")
    cols = _map(lambda a: _sos_point(config, a[0], a[1], stream), enumerate(config.sweep), threads)
    return Spectrum(np.asarray(config.sweep), np.column_stack(cols).astype(np.int64), config.n, config.seed)


def _aid_point(config: ExperimentConfig, q: float, key) -> np.ndarray:
    rng = RngStream(config.seed, *key).generator
    lengths, lam = config.lambda_schedule.blocks(config.n)
    p = config.qubit.p_mean
    activated = np.zeros(config.runs, dtype=np.int64)
    for m, lv in zip(lengths, lam):
        activated += rng.binomial(m, p * q * lv, size=config.runs)
        if config.background_defects:
            activated += rng.binomial(m * config.background_defects, config.q_w * lv, size=config.runs)
    return rng.poisson(config.qubit.ka_mean * activated)


def simulate_aid(config: ExperimentConfig, threads: int = 1, stream: str = "aid") -> Spectrum:
    """Summed ancilla photon counts for every sweep point and run."""
    qs = [config.aid_q(x) for x in config.sweep]
    cols = _map(lambda a: _aid_point(config, qs[a], (stream, a)), range(len(qs)), threads)
    return Spectrum(np.asarray(config.sweep), np.column_stack(cols).astype(np.int64), config.n, config.seed)


@dataclass(frozen=True)
class SNREstimate:
    value: float
    ci_low: float
    ci_high: float
    runs: int

    def contains(self, x: float) -> bool:
        return self.ci_low <= x <= self.ci_high


def _snr(on, off):
    diff = np.abs(on.mean(axis=-1) - off.mean(axis=-1))
    noise = np.sqrt(on.var(axis=-1, ddof=1) + off.var(axis=-1, ddof=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(noise > 0, diff / noise, np.where(diff > 0, np.inf, 0.0))


def estimate_snr(
    on_runs: Sequence[float],
    off_runs: Sequence[float],
    resamples: int = 1000,
    confidence: float = 0.95,
    seed: int = 0,
) -> SNREstimate:
    """``|mean_on - mean_off| / sqrt(var_on + var_off)`` with a paired percentile bootstrap CI."""
    on = np.asarray(on_runs, dtype=float)
    off = np.asarray(off_runs, dtype=float)
    if on.size < 2 or off.size < 2:
        raise ValueError("need at least two runs on and off resonance")
    if on.size != off.size:
        raise ValueError("on and off run counts differ")
    if on.size < 30:
        log.warning("SNR from only %d run pairs; the bootstrap interval is unreliable", on.size)
    value = float(_snr(on, off))
    rng = RngStream(seed, "bootstrap", on.size).generator
    idx = rng.integers(0, on.size, size=(resamples, on.size))
    boots = _snr(on[idx], off[idx])
    alpha = 0.5 * (1.0 - confidence)
    lo, hi = np.quantile(boots, [alpha, 1.0 - alpha])
    return SNREstimate(value, float(lo), float(hi), int(on.size))


def aid_run_moments(config: ExperimentConfig, q: float, n: Optional[int] = None):
    """Exact mean and variance of the summed AID photon count of one run."""
    n = config.n if n is None else n
    lengths, lam = config.lambda_schedule.blocks(n)
    a = config.qubit.p_mean * q * lam
    b = config.q_w * lam
    d = config.background_defects
    mean_act = float(np.dot(lengths, a + d * b))
    var_act = float(np.dot(lengths, a * (1 - a) + d * b * (1 - b)))
    ka = config.qubit.ka_mean
    return ka * mean_act, ka * mean_act + ka * ka * var_act


@dataclass(frozen=True)
class SensitivityPoint:
    n: int
    t_aid: float
    snr: float
    snr_low: float
    snr_high: float
    eta: float
    snr_expected: float
    eta_expected: float
    valid: bool

    HEADER = ("n", "t_aid_s", "snr", "snr_ci_low", "snr_ci_high", "eta_sqrt_s",
              "snr_expected", "eta_expected_sqrt_s", "valid")

    def row(self):
        return (self.n, self.t_aid, self.snr, self.snr_low, self.snr_high, self.eta,
                self.snr_expected, self.eta_expected, int(self.valid))


def _eta(n, t_aid, snr):
    return math.sqrt(n * t_aid) / snr if snr > 0 and math.isfinite(snr) else math.nan


def sensitivity_curve(
    config: ExperimentConfig,
    n_values: Iterable[int],
    on_point: Optional[float] = None,
    off_point: Optional[float] = None,
    threads: int = 1,
    resamples: int = 1000,
) -> List[SensitivityPoint]:
    """AID sensitivity ``sqrt(n t_aid(n)) / SNR(n)`` for each repeat count.

    SNR is estimated from ``config.runs`` simulated runs on and off
    resonance (default: the response centre and a point 100 linewidths
    away). Points with non-positive SNR are reported as invalid.
    ``snr_expected``/``eta_expected`` use the exact run moments.
    """
    if config.runs < 2:
        raise ValueError("sensitivity_curve needs runs >= 2")
    resp = config.response
    on_point = resp.center_freq if on_point is None else on_point
    off_point = resp.center_freq + 100.0 * resp.fwhm if off_point is None else off_point
    q_on, q_off = config.aid_q(on_point), config.aid_q(off_point)
    n_values = [int(n) for n in n_values]

    def task(item):
        idx, n = item
        if n < 1:
            raise ValueError("repeat counts must be >= 1")
        cfg = replace(config, n=n)
        on = _aid_point(cfg, q_on, ("curve", idx, "on"))
        off = _aid_point(cfg, q_off, ("curve", idx, "off"))
        est = estimate_snr(on, off, resamples=resamples, seed=config.seed)
        m_on, v_on = aid_run_moments(cfg, q_on)
        m_off, v_off = aid_run_moments(cfg, q_off)
        denom = math.sqrt(v_on + v_off)
        snr_exp = abs(m_on - m_off) / denom if denom > 0 else 0.0
        t_aid = replace(config.timing, n=n).t_aid()
        eta = _eta(n, t_aid, est.value)
        return SensitivityPoint(
            n, t_aid, est.value, est.ci_low, est.ci_high, eta, snr_exp,
            _eta(n, t_aid, snr_exp), math.isfinite(eta),
        )

    return _map(task, list(enumerate(n_values)), threads)



def fit_lorentzian(points: Sequence[float], values: Sequence[float]):
    """Least-squares Lorentzian dip ``b - a / (1 + (2 (x - x0) / fwhm)^2)``.

    Returns ``(x0, fwhm, a, b)``; ``a > 0`` for a dip.
    """
    import warnings

    from scipy.optimize import OptimizeWarning, curve_fit

    x = np.asarray(points, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 4:
        raise ValueError("need at least four points to fit a Lorentzian")
    # fit in a centred, normalised coordinate; GHz offsets are otherwise ill-conditioned
    i = int(np.argmin(y))
    span = float(np.ptp(x)) or 1.0
    u = (x - x[i]) / span
    b0 = float(np.median(np.concatenate([y[:2], y[-2:]])))
    a0 = max(b0 - y[i], 1e-12)
    half = u[y < b0 - a0 / 2]
    w0 = float(half.max() - half.min()) if half.size > 1 else 0.1

    def model(xs, x0, w, a, b):
        z = 2.0 * (xs - x0) / w
        return b - a / (1.0 + z * z)

    with warnings.catch_warnings():
        # a noiseless dip leaves the covariance undefined; only popt is used
        warnings.simplefilter("ignore", OptimizeWarning)
        popt, _ = curve_fit(model, u, y, p0=(0.0, max(w0, 2.0 / x.size), a0, b0), maxfev=20000)
    u0, w, a, b = (float(v) for v in popt)
    return float(x[i] + u0 * span), abs(w) * span, a, b
