"""Closed-form SNR and sensitivity of SOS, SCC and AID spin readout.

Sensitivities are in units of sqrt(s) (time-normalised inverse SNR); smaller
is better. All functions are pure and take immutable parameter objects.

Criterion algebra (:func:`aid_beats_sos`)
-----------------------------------------
With ``<k1> = (1 - mu) <k0>`` and small ``mu`` the SOS sensitivity squared is
``eta_SOS^2 ~ 2 t_c / (mu^2 <k0>)``. In the high-photon AID regime
(``lambda ~ p ~ 1``) ``eta_AID^2 = t_AID V / dq^2`` with
``V = q0(1-q0) + q1(1-q1)``, ``dq = |q0 - q1|`` and
``t_AID = t_c (1 + (t_ia + t_ra) / (n t_c))``. Hence ``eta_AID < eta_SOS``
if and only if::

    mu^2 <k0> (1 + (t_ia + t_ra)/(n t_c)) < 2 dq^2 / V

The factor 2 and the squared contrast come straight out of the two
sensitivities; :func:`aid_beats_sos` evaluates exactly this inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

from .stochastics import (
    BernoulliVar,
    PoissonVar,
    ReadoutStatistics,
    aid_trap_activation,
    photon_compound,
    scc_trap_activation,
)

__all__ = [
    "DegenerateParameterError",
    "TimingBudget",
    "QubitReadoutParams",
    "SOSSensitivity",
    "CriterionResult",
    "snr_sos",
    "eta_sos",
    "eta_scc",
    "eta_aid",
    "eta_aid_limit_high_ka",
    "eta_aid_limit_low_ka",
    "eta_aid_background_limit",
    "aid_beats_sos",
]


class DegenerateParameterError(ValueError):
    """Parameters for which a sensitivity is undefined (zero signal)."""


@dataclass(frozen=True)
class TimingBudget:
    """Per-cycle durations in seconds and the repeat count ``n``.

    For SCC readout ``t_i`` and ``t_r`` are read as the qubit *charge*
    initialisation and readout times.
    """

    t_i: float = 0.0
    t_r: float = 0.0
    t_e: float = 0.0
    t_scc: float = 0.0
    t_ia: float = 0.0
    t_ra: float = 0.0
    n: int = 1

    def __post_init__(self):
        for name in ("t_i", "t_r", "t_e", "t_scc", "t_ia", "t_ra"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite time >= 0, got {value!r}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be an integer >= 1, got {self.n!r}")

    def t_sos(self) -> float:
        return self.t_i + self.t_r + self.t_e

    def t_scc_total(self) -> float:
        return self.t_i + self.t_r + self.t_scc + self.t_e

    def t_aid(self) -> float:
        return self.t_scc + self.t_e + (self.t_ia + self.t_ra) / self.n

    def scaled(self, factor: float) -> "TimingBudget":
        """Every duration multiplied by ``factor`` (``n`` unchanged)."""
        return replace(
            self,
            **{k: getattr(self, k) * factor for k in ("t_i", "t_r", "t_e", "t_scc", "t_ia", "t_ra")},
        )


@dataclass(frozen=True)
class QubitReadoutParams:
    """Mean values of the readout variables.

    ``contrast_sos`` is ``mu`` in ``<k1> = (1 - mu) <k0>``. ``k_mean`` is the
    photon number of the qubit charge readout used by SCC; it defaults to
    ``k0_mean``.
    """

    k0_mean: float = 0.075
    contrast_sos: float = 0.3
    q0_mean: float = 0.8
    q1_mean: float = 0.5
    p_mean: float = 1.0
    r_mean: float = 0.0
    w_mean: float = 0.0
    lambda_mean: float = 1.0
    ka_mean: float = 22.0
    k_mean: Optional[float] = None

    def __post_init__(self):
        for name in ("contrast_sos", "q0_mean", "q1_mean", "p_mean", "r_mean", "lambda_mean"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        for name in ("k0_mean", "w_mean", "ka_mean"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if self.k_mean is not None and self.k_mean < 0:
            raise ValueError(f"k_mean must be >= 0, got {self.k_mean!r}")

    @property
    def k1_mean(self) -> float:
        return (1.0 - self.contrast_sos) * self.k0_mean

    @property
    def scc_photons(self) -> float:
        return self.k0_mean if self.k_mean is None else self.k_mean

    @property
    def spin_contrast(self) -> float:
        return abs(self.q0_mean - self.q1_mean)


class SOSSensitivity(NamedTuple):
    exact: float
    approximate: float


class CriterionResult(NamedTuple):
    aid_wins: bool
    lhs: float
    rhs: float
    margin: float  # rhs / lhs; > 1 means AID is more sensitive


def _require_spin_contrast(params):
    if params.q0_mean == params.q1_mean:
        raise DegenerateParameterError("zero spin contrast: q0_mean == q1_mean")
    return params.spin_contrast


def snr_sos(params: QubitReadoutParams, n: int) -> float:
    """Best-case SOS signal-to-noise ratio after ``n`` repeats (Poisson counts)."""
    k0, k1 = params.k0_mean, params.k1_mean
    if k0 <= 0:
        raise DegenerateParameterError("k0_mean = 0: zero signal and zero noise")
    return math.sqrt(n) * abs(k0 - k1) / math.sqrt(k0 + k1)


def eta_sos(params: QubitReadoutParams, timing: TimingBudget) -> SOSSensitivity:
    """SOS sensitivity, exact Poisson form and the small-contrast approximation."""
    k0, k1, mu = params.k0_mean, params.k1_mean, params.contrast_sos
    if k0 <= 0 or mu <= 0:
        raise DegenerateParameterError("SOS sensitivity needs k0_mean > 0 and contrast_sos > 0")
    t = timing.t_sos()
    exact = math.sqrt(t * (k0 + k1)) / abs(k0 - k1)
    approximate = math.sqrt(2.0) / (mu * math.sqrt(k0)) * math.sqrt(t)
    return SOSSensitivity(exact, approximate)


def eta_scc(params: QubitReadoutParams, timing: TimingBudget) -> float:
    """SCC sensitivity with local optical charge readout."""
    dq = _require_spin_contrast(params)
    k = params.scc_photons
    if params.p_mean <= 0 or k <= 0:
        raise DegenerateParameterError("SCC sensitivity needs p_mean > 0 and readout photons > 0")
    p, r = BernoulliVar(params.p_mean), BernoulliVar(params.r_mean)
    v0 = scc_trap_activation(p, BernoulliVar(params.q0_mean), r)
    v1 = scc_trap_activation(p, BernoulliVar(params.q1_mean), r)
    noise = (k * k + k) * (v0.variance + v1.variance) + k * (v0.mean**2 + v1.mean**2)
    return math.sqrt(timing.t_scc_total()) * math.sqrt(noise) / (params.p_mean * dq * k)


def aid_activation_stats(params: QubitReadoutParams):
    """``(v0, v1)`` trap-activation statistics for the two spin projections."""
    p, w = BernoulliVar(params.p_mean), PoissonVar(params.w_mean)
    return (
        aid_trap_activation(p, BernoulliVar(params.q0_mean), w),
        aid_trap_activation(p, BernoulliVar(params.q1_mean), w),
    )


def aid_noise_terms(params: QubitReadoutParams) -> float:
    """Bracketed variance sum of the AID sensitivity (per unit ``<lambda>``)."""
    ka, lam = params.ka_mean, params.lambda_mean
    total = 0.0
    for v in aid_activation_stats(params):
        total += photon_compound(v, PoissonVar(ka)).variance + ka * ka * v.mean**2 * (1.0 - lam)
    return total


def eta_aid(params: QubitReadoutParams, timing: TimingBudget) -> float:
    """Full AID sensitivity including capture losses and background carriers."""
    dq = _require_spin_contrast(params)
    lam, ka, p = params.lambda_mean, params.ka_mean, params.p_mean
    if lam <= 0:
        raise DegenerateParameterError("no carrier capture: lambda_mean = 0")
    if p <= 0 or ka <= 0:
        raise DegenerateParameterError("AID sensitivity needs p_mean > 0 and ka_mean > 0")
    return math.sqrt(timing.t_aid()) * math.sqrt(aid_noise_terms(params)) / (math.sqrt(lam) * ka * p * dq)


def eta_aid_limit_high_ka(params: QubitReadoutParams, timing: TimingBudget) -> float:
    """Bright-ancilla limit: set only by the SCC probabilities (lambda ~ p ~ 1)."""
    dq = _require_spin_contrast(params)
    q0, q1 = params.q0_mean, params.q1_mean
    return math.sqrt(timing.t_aid()) * math.sqrt(q0 * (1 - q0) + q1 * (1 - q1)) / dq


def eta_aid_limit_low_ka(params: QubitReadoutParams, timing: TimingBudget) -> float:
    """Photon-starved limit, improving as ``1/sqrt(<k_a>)``."""
    dq = _require_spin_contrast(params)
    if params.ka_mean <= 0:
        raise DegenerateParameterError("ka_mean = 0")
    q0, q1 = params.q0_mean, params.q1_mean
    return math.sqrt(timing.t_aid()) * math.sqrt(q0 * q0 + q1 * q1) / (dq * math.sqrt(params.ka_mean))


def eta_aid_background_limit(params: QubitReadoutParams, timing: TimingBudget) -> float:
    """Background-carrier dominated limit (``lambda << 1``, ``w >> p q``)."""
    dq = _require_spin_contrast(params)
    if params.lambda_mean <= 0:
        raise DegenerateParameterError("no carrier capture: lambda_mean = 0")
    if params.p_mean <= 0:
        raise DegenerateParameterError("p_mean = 0")
    return (
        math.sqrt(2.0 * timing.t_aid())
        * params.w_mean
        / (math.sqrt(params.lambda_mean) * params.p_mean * dq)
    )


def aid_beats_sos(params: QubitReadoutParams, timing: TimingBudget) -> CriterionResult:
    """Evaluate the AID-vs-SOS criterion (see module docstring for the algebra).

    ``t_c`` is taken as ``t_i + t_r + t_e``.
    """
    q0, q1 = params.q0_mean, params.q1_mean
    t_c = timing.t_sos()
    overhead = (timing.t_ia + timing.t_ra) / (timing.n * t_c) if t_c > 0 else math.inf
    lhs = params.contrast_sos**2 * params.k0_mean * (1.0 + overhead)
    variance = q0 * (1 - q0) + q1 * (1 - q1)
    dq2 = (q0 - q1) ** 2
    if dq2 == 0:
        rhs = 0.0
    elif variance == 0:
        rhs = math.inf
    else:
        rhs = 2.0 * dq2 / variance
    if lhs == 0:
        margin = math.inf if rhs > 0 else 0.0
    else:
        margin = rhs / lhs
    return CriterionResult(bool(lhs < rhs), lhs, rhs, margin)
