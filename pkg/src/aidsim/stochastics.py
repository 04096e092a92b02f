"""Stochastic variables of the readout models and their compound statistics.

The closed forms assume mutual independence of every elementary variable.
:func:`enumerate_compound_variance` recomputes the same moments by brute
force over the joint support and serves as the reference for the closed forms.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import stats

__all__ = [
    "BernoulliVar",
    "PoissonVar",
    "DiscreteVar",
    "ReadoutStatistics",
    "EnumeratedStatistics",
    "scc_trap_activation",
    "scc_variance_uncorrelated",
    "aid_trap_activation",
    "photon_compound",
    "enumerate_compound_variance",
    "RngStream",
    "stream_key",
    "sample",
    "sample_at",
]

SCC_V = "SCC_V"
AID_V = "AID_V"
PHOTON_COMPOUND = "PHOTON_COMPOUND"


def _check_probability(name, value):
    if not np.isfinite(value) or value < 0.0 or value > 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class BernoulliVar:
    """Boolean variable with success probability ``mean``."""

    mean: float

    def __post_init__(self):
        _check_probability("Bernoulli mean", self.mean)

    def variance(self) -> float:
        return self.mean * (1.0 - self.mean)

    def support(self, tol=None):
        return np.array([0.0, 1.0]), np.array([1.0 - self.mean, self.mean])


@dataclass(frozen=True)
class PoissonVar:
    """Poisson-distributed count with expectation ``mean``."""

    mean: float

    def __post_init__(self):
        if not np.isfinite(self.mean) or self.mean < 0.0:
            raise ValueError(f"Poisson mean must be >= 0, got {self.mean!r}")

    def variance(self) -> float:
        return self.mean

    def support(self, tol=1e-12):
        if self.mean == 0.0:
            return np.array([0.0]), np.array([1.0])
        # smallest K with P(k > K) <= tol; sf stays accurate far below eps
        kmax = int(self.mean)
        while stats.poisson.sf(kmax, self.mean) > tol:
            kmax += 1
        ks = np.arange(kmax + 1)
        return ks.astype(float), stats.poisson.pmf(ks, self.mean)


@dataclass(frozen=True)
class DiscreteVar:
    """Finite discrete distribution, used to feed arbitrary ``v`` into the oracle."""

    values: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("values and probs must be non-empty and of equal length")
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def variance(self) -> float:
        v = np.asarray(self.values, dtype=float)
        return float(np.dot(v * v, self.probs) - self.mean**2)

    def support(self, tol=None):
        return np.asarray(self.values, dtype=float), np.asarray(self.probs, dtype=float)


Variable = Union[BernoulliVar, PoissonVar, DiscreteVar]


@dataclass(frozen=True)
class ReadoutStatistics:
    """Mean and variance of a compound measurement variable."""

    mean: float
    variance: float

    def __post_init__(self):
        # tolerate round-off from the closed forms
        if self.variance < -1e-12 * max(1.0, abs(self.mean) ** 2):
            raise ValueError(f"variance must be >= 0, got {self.variance!r}")

    @classmethod
    def of(cls, var: Variable) -> "ReadoutStatistics":
        return cls(float(var.mean), float(var.variance()))

    def times(self, other: "ReadoutStatistics") -> "ReadoutStatistics":
        """Statistics of ``X * Y`` for independent ``X`` (self) and ``Y``."""
        m1, v1, m2, v2 = self.mean, self.variance, other.mean, other.variance
        return ReadoutStatistics(m1 * m2, m1 * m1 * v2 + m2 * m2 * v1 + v1 * v2)

    @property
    def std(self) -> float:
        return float(np.sqrt(max(self.variance, 0.0)))


@dataclass(frozen=True)
class EnumeratedStatistics(ReadoutStatistics):
    """Oracle result; ``truncated_mass`` is the probability left out of the support."""

    truncated_mass: float = 0.0


def scc_trap_activation(p: BernoulliVar, q: BernoulliVar, r: BernoulliVar) -> ReadoutStatistics:
    """Statistics of ``v = p (1 - q) + (1 - p) r`` for independent Booleans.

    The two summands share ``p`` and are mutually exclusive, so the variance
    carries the cross term ``-2 <p>(1-<p>)(1-<q>)<r>`` on top of the
    uncorrelated propagation returned by :func:`scc_variance_uncorrelated`.
    The result is exact, i.e. ``v`` is itself Boolean.
    """
    pm, qm, rm = p.mean, q.mean, r.mean
    mean = pm * (1.0 - qm) + (1.0 - pm) * rm
    cross = -2.0 * pm * (1.0 - pm) * (1.0 - qm) * rm
    return ReadoutStatistics(mean, scc_variance_uncorrelated(p, q, r) + cross)


def scc_variance_uncorrelated(p: BernoulliVar, q: BernoulliVar, r: BernoulliVar) -> float:
    """Five-term variance obtained by propagating through the sum as if uncorrelated.

    Coincides with the exact variance whenever ``<p>`` is 0 or 1, ``<q>`` is 1
    or ``<r>`` is 0; otherwise it overestimates it.
    """
    pm, qm, rm = p.mean, q.mean, r.mean
    vp, vq, vr = pm * (1 - pm), qm * (1 - qm), rm * (1 - rm)
    return (
        (1 - qm) ** 2 * vp
        + pm**2 * vq
        + rm**2 * vp
        + (1 - pm) ** 2 * vr
        + vp * (vq + vr)
    )


def aid_trap_activation(p: BernoulliVar, q: BernoulliVar, w: PoissonVar) -> ReadoutStatistics:
    """Statistics of ``v = p q + w`` with Boolean ``p, q`` and Poisson ``w``."""
    pm, qm, wm = p.mean, q.mean, w.mean
    vp, vq = pm * (1 - pm), qm * (1 - qm)
    variance = qm**2 * vp + pm**2 * vq + vp * vq + wm
    return ReadoutStatistics(pm * qm + wm, variance)


def photon_compound(v: ReadoutStatistics, k: PoissonVar) -> ReadoutStatistics:
    """Statistics of the product ``v * k`` with Poisson ``k`` independent of ``v``."""
    km = k.mean
    variance = km * (v.mean**2 + v.variance) + km**2 * v.variance
    return ReadoutStatistics(v.mean * km, variance)


_FORMS = {
    SCC_V: (3, lambda p, q, r: p * (1.0 - q) + (1.0 - p) * r),
    AID_V: (3, lambda p, q, w: p * q + w),
    PHOTON_COMPOUND: (2, lambda v, k: v * k),
}


def enumerate_compound_variance(
    components: Sequence[Variable], expression: str, tol: float = 1e-12
) -> EnumeratedStatistics:
    """Exact moments of a fixed compound form by exhaustive enumeration.

    Parameters
    ----------
    components
        Elementary variables in the order of the form: ``(p, q, r)`` for
        ``SCC_V``, ``(p, q, w)`` for ``AID_V`` and ``(v, k)`` for
        ``PHOTON_COMPOUND``.
    expression
        One of ``"SCC_V"``, ``"AID_V"``, ``"PHOTON_COMPOUND"``.
    tol
        Poisson supports are cut where the CDF first reaches ``1 - tol``.
    """
    if tol <= 0:
        raise ValueError("truncation tolerance must be > 0")
    try:
        arity, func = _FORMS[expression]
    except KeyError:
        raise ValueError(f"unknown compound form {expression!r}") from None
    if len(components) != arity:
        raise ValueError(f"{expression} takes {arity} components, got {len(components)}")

    supports = [c.support(tol) for c in components]
    grids = np.meshgrid(*[s[0] for s in supports], indexing="ij")
    weights = np.ones_like(grids[0])
    for axis, (_, probs) in enumerate(supports):
        shape = [1] * arity
        shape[axis] = -1
        weights = weights * probs.reshape(shape)
    values = func(*grids)
    total = weights.sum()
    mean = float(np.sum(weights * values))
    second = float(np.sum(weights * values * values))
    return EnumeratedStatistics(mean, max(second - mean * mean, 0.0), truncated_mass=float(1.0 - total))


# --------------------------------------------------------------------------
# seeded sampling


def stream_key(*parts) -> tuple:
    """Map mixed str/int key parts to a tuple of stable 32-bit integers."""
    out = []
    for part in parts:
        if isinstance(part, str):
            out.append(zlib.crc32(part.encode("utf-8")))
        else:
            out.append(int(part))
    return tuple(out)


class RngStream:
    """Counter-based (Philox) random stream addressed by ``(seed, key...)``.

    Two streams built from the same seed and key produce identical sequences;
    different keys give statistically independent sequences.
    """

    def __init__(self, seed: int, *key):
        self.seed = int(seed)
        self.key = stream_key(*key)
        self._seedseq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.Philox(self._seedseq))

    def child(self, *key) -> "RngStream":
        return RngStream(self.seed, *(self.key + stream_key(*key)))

    def advanced(self, draws: int) -> np.random.Generator:
        """Fresh generator positioned ``draws`` Philox counter blocks into the stream."""
        bitgen = np.random.Philox(self._seedseq)
        bitgen.advance(int(draws))
        return np.random.Generator(bitgen)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key})"


def sample(var: Variable, stream, size=None):
    """Draw from ``var`` using an :class:`RngStream` or a numpy ``Generator``.

    Booleans come back as ``bool``/``bool_`` arrays.
    """
    gen = stream.generator if isinstance(stream, RngStream) else stream
    if isinstance(var, BernoulliVar):
        return gen.random(size) < var.mean
    if isinstance(var, PoissonVar):
        return gen.poisson(var.mean, size)
    if isinstance(var, DiscreteVar):
        return gen.choice(np.asarray(var.values), size=size, p=np.asarray(var.probs))
    raise TypeError(f"cannot sample {type(var).__name__}")


def sample_at(var: Variable, seed: int, stream_index: int, draw_index: int):
    """Single draw fully determined by ``(seed, stream_index, draw_index)``."""
    return sample(var, RngStream(seed, stream_index).advanced(draw_index))
