"""Photo-generation, diffusion and capture of carriers around the qubit.

Four radial fields on a disk of thickness 1 um are evolved under continuous
illumination: the NV- density ``Q_minus``, the ionised nitrogen density
``P_plus`` and the free electron and hole densities ``n`` and ``p``.
Space is discretised with conservative finite volumes (cylindrical
symmetry, reflecting ends) and time with adaptive backward Euler; every
Newton update preserves the discrete total charge to round-off.

Units: um, s, um^-3. Pulsed SCC illumination is modelled as continuous
illumination lasting ``cycle_time * n`` (80 ns per cycle by default).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from . import _kernels

log = logging.getLogger(__name__)

__all__ = [
    "PPM_DENSITY",
    "SolverError",
    "MaterialParams",
    "RadialGrid",
    "CarrierState",
    "ActivationCurve",
    "CarrierSolver",
    "initial_state",
    "evolve",
    "simulate",
    "charge_balance",
    "total_ionized_charge",
    "activated_ancillas",
    "activation_profile",
    "calibrate_power",
    "linear_r2",
    "carriers_per_cycle_at",
    "profile_table",
    "activation_table",
    "cycle_grid",
    "background_sweep",
]

#: carbon-site density of diamond, um^-3 per ppm
PPM_DENSITY = 1.76e5


class SolverError(RuntimeError):
    """The carrier-dynamics integration failed (step underflow, negativity, ...)."""


@dataclass(frozen=True)
class MaterialParams:
    """Densities, cross sections, transport and illumination of the sample.

    Defaults reproduce the nitrogen-rich diamond scenario (1 ppm N,
    0.01 ppm NV, 70 % initially NV-). Cross sections are in um^2, the thermal
    velocity in um/s, diffusivities in um^2/s and powers in mW.
    """

    P_ppm: float = 1.0
    Q_ppm: float = 0.01
    Q_minus_ppm: float = 0.007
    sigma_Nn_um2: float = 3.1e-6
    sigma_Np_um2: float = 1.4e-8
    sigma_NVp_um2: float = 9e-8
    sigma_NVn_um2: float = 0.0
    v_th_um_s: float = 1.15e11
    D_n_um2_s: float = 6.1e9
    D_p_um2_s: float = 5.3e9
    mu_n_um2_Vs: float = 2.4e11
    mu_p_um2_Vs: float = 2.1e11
    I_mW: float = 2.22
    I0_mW: float = 1e-3
    s_um: float = 1.0
    thetaN_prefactor_Hz: float = 15.0
    theta0_prefactor_Hz: float = 0.0046
    thetaMinus_prefactor_Hz: float = 0.0107
    omega_um3_s: float = 0.0
    R_max_um: float = 250.0
    thickness_um: float = 1.0
    cycle_time_s: float = 80e-9
    ancilla_exclusion_um: float = 0.0
    spot_radius_um: float = 3.0

    def __post_init__(self):
        for name in (
            "P_ppm", "Q_ppm", "Q_minus_ppm", "sigma_Nn_um2", "sigma_Np_um2", "sigma_NVp_um2",
            "sigma_NVn_um2", "v_th_um_s", "D_n_um2_s", "D_p_um2_s", "I_mW", "omega_um3_s",
            "thetaN_prefactor_Hz", "theta0_prefactor_Hz", "thetaMinus_prefactor_Hz",
            "ancilla_exclusion_um", "spot_radius_um",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        for name in ("I0_mW", "s_um", "R_max_um", "thickness_um", "cycle_time_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.Q_minus_ppm > self.Q_ppm:
            raise ValueError("initial NV- density cannot exceed the NV density")
        if self.Q_minus_ppm > self.P_ppm:
            raise ValueError("initial N+ density (= initial NV- density) cannot exceed P")

    # densities in um^-3
    @property
    def P(self) -> float:
        return self.P_ppm * PPM_DENSITY

    @property
    def Q(self) -> float:
        return self.Q_ppm * PPM_DENSITY

    @property
    def Q_minus_init(self) -> float:
        return self.Q_minus_ppm * PPM_DENSITY

    @property
    def P0_init(self) -> float:
        return self.P - self.Q_minus_init

    # capture coefficients, um^3/s
    @property
    def kappa_p(self) -> float:
        return self.sigma_NVp_um2 * self.v_th_um_s

    @property
    def kappa_n(self) -> float:
        return self.sigma_NVn_um2 * self.v_th_um_s

    @property
    def gamma_p(self) -> float:
        return self.sigma_Np_um2 * self.v_th_um_s

    @property
    def gamma_n(self) -> float:
        return self.sigma_Nn_um2 * self.v_th_um_s

    def with_background_scale(self, epsilon: float, reference_um2: float = 1.4e-8) -> "MaterialParams":
        """Copy with the N0 hole cross section set to ``epsilon * reference``."""
        return replace(self, sigma_Np_um2=epsilon * reference_um2)

    def rate_prefactors(self):
        """Peak (r = 0) rates ``(theta_N, theta_0, theta_minus)`` in 1/s."""
        x = self.I_mW / self.I0_mW
        return (
            self.thetaN_prefactor_Hz * x,
            self.theta0_prefactor_Hz * x * x,
            self.thetaMinus_prefactor_Hz * x * x,
        )

    def consts(self) -> np.ndarray:
        return np.array(
            [self.Q, self.P, self.kappa_p, self.kappa_n, self.gamma_p, self.gamma_n,
             self.omega_um3_s, self.D_n_um2_s, self.D_p_um2_s],
            dtype=float,
        )


@dataclass(frozen=True)
class RadialGrid:
    """Finite-volume cells ``[faces[i], faces[i+1]]`` on ``[0, R_max]``."""

    faces: np.ndarray
    thickness: float = 1.0

    def __post_init__(self):
        f = np.asarray(self.faces, dtype=float)
        if f.ndim != 1 or f.size < 3 or f[0] != 0.0 or np.any(np.diff(f) <= 0):
            raise ValueError("faces must start at 0 and increase strictly")
        object.__setattr__(self, "faces", f)

    @classmethod
    def geometric(cls, R_max=250.0, dr_min=0.08, dr_max=5.0, refine=1, thickness=1.0):
        """Geometrically stretched grid from ``dr_min`` at the axis to about ``dr_max``.

        ``refine`` splits every cell into that many equal sub-cells.
        """
        if not (0 < dr_min <= dr_max < R_max):
            raise ValueError("need 0 < dr_min <= dr_max < R_max")
        if dr_min == dr_max:
            widths = np.full(int(round(R_max / dr_min)), R_max / round(R_max / dr_min))
        else:
            # growth g with dr_min * g**(m-1) ~ dr_max and sum of widths = R_max
            g0 = (R_max - dr_min) / (R_max - dr_max)
            m = int(round(math.log(dr_max / dr_min) / math.log(g0))) + 1
            g = brentq(lambda g: dr_min * (g**m - 1) / (g - 1) - R_max, 1 + 1e-9, 2.0)
            widths = dr_min * g ** np.arange(m)
        faces = np.concatenate([[0.0], np.cumsum(widths)])
        faces[-1] = R_max
        if refine > 1:
            faces = np.concatenate(
                [np.linspace(a, b, refine + 1)[:-1] for a, b in zip(faces[:-1], faces[1:])] + [[R_max]]
            )
        return cls(faces, thickness)

    @property
    def size(self) -> int:
        return self.faces.size - 1

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.faces[:-1] + self.faces[1:])

    @property
    def volumes(self) -> np.ndarray:
        return np.pi * np.diff(self.faces**2) * self.thickness

    @property
    def R_max(self) -> float:
        return float(self.faces[-1])

    def couplings(self):
        """Face transmissibility over cell volume, towards the lower and upper neighbour."""
        c = self.centers
        trans = 2.0 * np.pi * self.faces[1:-1] * self.thickness / np.diff(c)
        vol = self.volumes
        lo = np.zeros(self.size)
        up = np.zeros(self.size)
        lo[1:] = trans / vol[1:]
        up[:-1] = trans / vol[:-1]
        return lo, up

    def gaussian_average(self, s: float) -> np.ndarray:
        """Exact cell average of ``exp(-r^2/s^2)``."""
        e = np.exp(-(self.faces**2) / (s * s))
        return s * s * (e[:-1] - e[1:]) / np.diff(self.faces**2)


@dataclass
class CarrierState:
    """Radial fields at elapsed illumination time ``time``.

    ``generated_electrons``/``generated_holes`` are the carriers photo-generated
    since the initial state (total numbers, not densities).
    """

    grid: RadialGrid
    Q_minus: np.ndarray
    P_plus: np.ndarray
    n: np.ndarray
    p: np.ndarray
    time: float = 0.0
    generated_electrons: float = 0.0
    generated_holes: float = 0.0
    error_estimate: float = 0.0
    steps: int = 0

    def as_array(self) -> np.ndarray:
        return np.ascontiguousarray(np.stack([self.Q_minus, self.P_plus, self.n, self.p], axis=1))

    @classmethod
    def from_array(cls, grid, y, **kw):
        return cls(grid, y[:, 0].copy(), y[:, 1].copy(), y[:, 2].copy(), y[:, 3].copy(), **kw)

    def copy(self) -> "CarrierState":
        return replace(
            self, Q_minus=self.Q_minus.copy(), P_plus=self.P_plus.copy(), n=self.n.copy(), p=self.p.copy()
        )

    @property
    def cycles(self) -> float:
        return self.time


def initial_state(params: MaterialParams, grid: Optional[RadialGrid] = None) -> CarrierState:
    """Ancillas prepared to NV- (outside the exclusion radius); charge-neutral start.

    Ionised nitrogen starts at the same local density as NV- so the charge
    balance is exactly zero.
    """
    if grid is None:
        grid = RadialGrid.geometric(R_max=params.R_max_um, thickness=params.thickness_um)
    qm = np.full(grid.size, params.Q_minus_init)
    if params.ancilla_exclusion_um > 0:
        # cells inside the exclusion radius keep every NV neutral
        qm[grid.centers < params.ancilla_exclusion_um] = 0.0
    zeros = np.zeros(grid.size)
    return CarrierState(grid, qm, qm.copy(), zeros.copy(), zeros.copy())


def charge_balance(state: CarrierState, params: Optional[MaterialParams] = None) -> float:
    """Signed net charge (elementary charges) relative to the neutral reference.

    ``P_plus`` counts the nitrogen ionised relative to the fully neutral
    reference, so the integrand is ``P_plus - Q_minus + p - n``.
    """
    vol = state.grid.volumes
    return float(np.dot(vol, state.P_plus - state.Q_minus + state.p - state.n))


def total_ionized_charge(state: CarrierState) -> float:
    """Sum of all charged species, the scale for relative charge drift."""
    vol = state.grid.volumes
    return float(np.dot(vol, state.P_plus + state.Q_minus + state.p + state.n))


class CarrierSolver:
    """Adaptive backward-Euler integrator for the four coupled radial fields.

    Each step is taken once with ``h`` and twice with ``h/2``; the difference
    estimates the local error and the half-step solution is kept. The error
    is measured per species against ``atol + rtol |y|`` in the max norm.
    """

    def __init__(
        self,
        params: MaterialParams,
        grid: RadialGrid,
        rtol: float = 1e-4,
        atol: Optional[Sequence[float]] = None,
        h_init: float = 1e-13,
        h_max: float = math.inf,
        h_min: float = 1e-22,
        kernels=None,
        negativity_tol: float = 1e-12,
        max_steps: int = 2_000_000,
    ):
        if np.count_nonzero(grid.centers <= params.s_um) < 10:
            raise ValueError(f"grid under-resolves the beam: need >= 10 cells within r <= {params.s_um} um")
        if not math.isclose(grid.R_max, params.R_max_um, rel_tol=1e-9):
            raise ValueError(f"grid extends to {grid.R_max} um but R_max_um = {params.R_max_um}")
        self.params = params
        self.grid = grid
        self.k = kernels if kernels is not None else _kernels
        self.rtol = rtol
        if atol is None:
            # carriers are tiny compared to the trap densities
            atol = (1e-7 * params.Q, 1e-7 * params.Q, 1e-10, 1e-10)
        self.atol = np.asarray(atol, dtype=float)
        self.h_init, self.h_max, self.h_min = h_init, h_max, h_min
        self.max_steps = max_steps
        self.consts = params.consts()
        self.lo, self.up = grid.couplings()
        g = grid.gaussian_average(params.s_um)
        tN, t0, tm = params.rate_prefactors()
        self.theta_n = np.ascontiguousarray(tN * g)
        self.theta0 = np.ascontiguousarray(t0 * g)
        self.theta_minus = np.ascontiguousarray(tm * g)
        self.vol = grid.volumes
        self.neg_floor = -negativity_tol * max(params.P, params.Q, 1.0)
        self._h = h_init

    # -- single implicit step -------------------------------------------------
    def _generation(self, y):
        """Total electron and hole generation rates (1/s) at state ``y``."""
        Q, P = self.params.Q, self.params.P
        ge = np.dot(self.vol, self.theta_minus * y[:, 0] + self.theta_n * (P - y[:, 1]))
        gh = np.dot(self.vol, self.theta0 * (Q - y[:, 0]))
        return ge, gh

    def _backward_euler(self, y0, h):
        """Solve ``y - y0 - h f(y) = 0``; returns ``None`` if Newton fails."""
        y = y0.copy()
        scale = self.atol + self.rtol * np.abs(y0)
        for it in range(12):
            f, A = self.k.reaction_diffusion(y, self.theta0, self.theta_minus, self.theta_n,
                                             self.consts, self.lo, self.up)
            res = y - y0 - h * f
            try:
                dy = self.k.newton_solve(A, h, self.lo, self.up, self.consts, np.ascontiguousarray(-res))
            except (ZeroDivisionError, np.linalg.LinAlgError, ValueError):
                return None
            if not np.all(np.isfinite(dy)):
                return None
            y += dy
            if np.max(np.abs(dy) / scale) < 1e-3:
                return y
        return None

    def _step(self, y, h):
        """One error-controlled step; returns ``(y_new, err)`` or ``(None, inf)``."""
        big = self._backward_euler(y, h)
        if big is None:
            return None, math.inf
        half = self._backward_euler(y, 0.5 * h)
        if half is None:
            return None, math.inf
        mid = half
        half = self._backward_euler(half, 0.5 * h)
        if half is None:
            return None, math.inf
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(half))
        err = float(np.max(np.abs(half - big) / scale))
        return (mid, half), err

    # -- driver ----------------------------------------------------------------
    def run(self, state: CarrierState, times: Sequence[float]) -> List[CarrierState]:
        """Integrate from ``state`` and return copies at each absolute time in ``times``."""
        times = [float(t) for t in times]
        if any(b < a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("output times must be non-decreasing")
        y = state.as_array()
        t = state.time
        ge_tot, gh_tot = state.generated_electrons, state.generated_holes
        err_max = state.error_estimate
        steps = state.steps
        out = []
        h = self._h
        for t_out in times:
            if t_out < t - 1e-15 * max(1.0, abs(t)):
                raise ValueError(f"output time {t_out} precedes state time {t}")
            while t < t_out:
                h = min(h, self.h_max)
                last = t + h >= t_out * (1 - 1e-12)
                if last:
                    h_try = t_out - t
                else:
                    h_try = h
                sol, err = self._step(y, h_try)
                if sol is None or err > 1.0:
                    shrink = 0.25 if sol is None else max(0.1, 0.9 / math.sqrt(err))
                    h = h_try * shrink
                    if h < self.h_min:
                        raise SolverError(
                            f"step size underflow at t={t:.6e} s (h={h:.3e} s, error ratio {err:.3e})"
                        )
                    continue
                mid, y_new = sol
                ge1, gh1 = self._generation(mid)
                ge2, gh2 = self._generation(y_new)
                ge_tot += 0.5 * h_try * (ge1 + ge2)
                gh_tot += 0.5 * h_try * (gh1 + gh2)
                ymin = y_new.min()
                if ymin < self.neg_floor:
                    cell, spec = np.unravel_index(np.argmin(y_new), y_new.shape)
                    name = ("Q_minus", "P_plus", "n", "p")[spec]
                    raise SolverError(
                        f"negative density {ymin:.3e} um^-3 in {name} at r={self.grid.centers[cell]:.3f} um, "
                        f"t={t + h_try:.6e} s"
                    )
                y = y_new
                t = t_out if last else t + h_try
                steps += 1
                if steps > self.max_steps:
                    raise SolverError(f"exceeded {self.max_steps} steps at t={t:.6e} s")
                err_max = max(err_max, err * self.rtol)
                growth = 4.0 if err < 1e-8 else min(4.0, 0.9 / math.sqrt(err))
                h = max(h_try * max(growth, 0.2), h) if last else h_try * max(growth, 0.2)
            out.append(
                CarrierState.from_array(
                    self.grid, y, time=t, generated_electrons=ge_tot, generated_holes=gh_tot,
                    error_estimate=err_max, steps=steps,
                )
            )
        self._h = h
        return out


def simulate(
    params: MaterialParams,
    times: Sequence[float],
    grid: Optional[RadialGrid] = None,
    state: Optional[CarrierState] = None,
    **solver_kw,
) -> List[CarrierState]:
    """Snapshots at absolute illumination ``times`` starting from ``state`` (default: initial)."""
    if state is None:
        state = initial_state(params, grid)
    solver = CarrierSolver(params, state.grid, **solver_kw)
    return solver.run(state, times)


def evolve(params: MaterialParams, state: CarrierState, duration: float, **solver_kw) -> CarrierState:
    """Advance ``state`` by ``duration`` seconds of illumination."""
    if not duration > 0:
        raise ValueError("duration must be > 0")
    return simulate(params, [state.time + duration], state=state, **solver_kw)[0]


# ---------------------------------------------------------------------------
# ancilla activation


@dataclass
class ActivationCurve:
    """Activated ancilla count at cycle indices ``n_cycles``.

    ``carriers_per_cycle`` is either a scalar or an array with one entry per
    interval ``(n_cycles[k-1], n_cycles[k]]`` (typically the increments of
    the background-free reference run). ``lambda_eff[k-1]`` then applies to
    every cycle in that interval.
    """

    n_cycles: np.ndarray
    activated: np.ndarray
    carriers_per_cycle: Union[float, np.ndarray] = 0.8

    def __post_init__(self):
        self.n_cycles = np.asarray(self.n_cycles, dtype=float)
        self.activated = np.asarray(self.activated, dtype=float)
        if self.n_cycles.shape != self.activated.shape:
            raise ValueError("n_cycles and activated must have equal length")

    @property
    def increments(self) -> np.ndarray:
        """Activated ancillas per cycle in each sampling interval."""
        return np.diff(self.activated) / np.diff(self.n_cycles)

    @property
    def lambda_eff(self) -> np.ndarray:
        c = np.asarray(self.carriers_per_cycle, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.where(c > 0, self.increments / c, 0.0)
        return lam

    def schedule(self, n_max: int) -> np.ndarray:
        """Per-cycle capture probability for cycles ``1..n_max`` (piecewise constant)."""
        edges = self.n_cycles
        lam = np.clip(self.lambda_eff, 0.0, 1.0)
        idx = np.searchsorted(edges, np.arange(1, n_max + 1), side="left") - 1
        idx = np.clip(idx, 0, lam.size - 1)
        return lam[idx]


def activation_profile(
    state: CarrierState, params: MaterialParams, ancilla_fraction: Optional[float] = None
) -> np.ndarray:
    """Activated ancilla density ``Q_minus_init - Q_minus`` per cell (um^-3).

    ``ancilla_fraction`` overrides the initial NV- share of the NV density.
    """
    if ancilla_fraction is not None:
        if not 0.0 <= ancilla_fraction <= 1.0:
            raise ValueError("ancilla_fraction must lie in [0, 1]")
        params = replace(params, Q_minus_ppm=ancilla_fraction * params.Q_ppm)
    ref = initial_state(params, state.grid).Q_minus
    return ref - state.Q_minus


def activated_ancillas(
    params: MaterialParams,
    states: Sequence[CarrierState],
    carriers_per_cycle: Union[float, np.ndarray, None] = None,
    ancilla_fraction: Optional[float] = None,
    monotone_tol: float = 1e-6,
) -> ActivationCurve:
    """Count activated ancillas outside the illumination spot for each state.

    Cells whose centre lies within ``params.spot_radius_um`` of the axis are
    excluded. ``carriers_per_cycle`` defaults to the curve's own mean
    increment. ``ancilla_fraction`` (default: ``Q_minus_ppm / Q_ppm``) sets
    the prepared NV- share the count is referenced to.
    """
    counts = []
    cycles = []
    for st in states:
        mask = st.grid.centers >= params.spot_radius_um
        counts.append(float(np.dot(st.grid.volumes[mask], activation_profile(st, params, ancilla_fraction)[mask])))
        cycles.append(st.time / params.cycle_time_s)
    counts = np.asarray(counts)
    drops = np.diff(counts)
    if drops.size and drops.min() < -monotone_tol * max(1.0, np.abs(counts).max()):
        k = int(np.argmin(drops))
        raise SolverError(
            f"activated ancilla count decreased by {-drops[k]:.3e} between cycles "
            f"{cycles[k]:.0f} and {cycles[k + 1]:.0f}"
        )
    if carriers_per_cycle is None:
        span = cycles[-1] - cycles[0] if len(cycles) > 1 else 0.0
        carriers_per_cycle = (counts[-1] - counts[0]) / span if span > 0 else 0.0
    return ActivationCurve(np.asarray(cycles), counts, carriers_per_cycle)


def linear_r2(x, y) -> float:
    """Coefficient of determination of a least-squares straight-line fit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = np.sum((y - (slope * x + intercept)) ** 2)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def carriers_per_cycle_at(
    params: MaterialParams, n_cycles: int = 10_000, samples: int = 11, grid=None, **solver_kw
) -> float:
    """Mean activated ancillas per cycle over ``n_cycles`` of illumination."""
    times = np.linspace(0.0, n_cycles * params.cycle_time_s, samples)[1:]
    states = simulate(params, times, grid=grid, **solver_kw)
    return activated_ancillas(params, states).activated[-1] / n_cycles


def calibrate_power(
    params: MaterialParams,
    target: float = 0.8,
    n_cycles: int = 10_000,
    bracket=(0.01, 100.0),
    rel_tol: float = 0.01,
    grid=None,
    **solver_kw,
) -> float:
    """Illumination power (mW) giving ``target`` activated ancillas per cycle.

    Runs with the nitrogen hole cross section set to zero, so every
    generated hole ends on an ancilla. Root finding is bracketed in ``log I``
    (Brent's method, bisection-safeguarded).
    """
    if not target > 0:
        raise ValueError("target must be > 0 carriers per cycle")
    base = replace(params, sigma_Np_um2=0.0)

    cache = {}

    def rate(log_i):
        if log_i not in cache:
            p = replace(base, I_mW=math.exp(log_i))
            cache[log_i] = carriers_per_cycle_at(p, n_cycles, grid=grid, **solver_kw)
            log.info("calibration: I=%.5g mW -> %.5g carriers/cycle", p.I_mW, cache[log_i])
        return cache[log_i] - target

    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    f_lo, f_hi = rate(lo), rate(hi)
    if f_lo > 0 or f_hi < 0:
        raise ValueError(
            f"target {target} carriers/cycle unreachable within [{bracket[0]}, {bracket[1]}] mW "
            f"(range {f_lo + target:.4g} .. {f_hi + target:.4g})"
        )
    # f ~ I^2, so a log-I tolerance of rel_tol/4 keeps the rate within rel_tol
    root = brentq(rate, lo, hi, xtol=rel_tol / 4.0)
    return math.exp(root)


# ---------------------------------------------------------------------------
# tables


def profile_table(state: CarrierState):
    """Header and rows of a radial snapshot (one row per cell centre)."""
    header = ["r_um", "Q_minus_um-3", "P_plus_um-3", "n_um-3", "p_um-3"]
    rows = np.column_stack([state.grid.centers, state.Q_minus, state.P_plus, state.n, state.p])
    return header, rows


def activation_table(curve: ActivationCurve):
    """Header and rows of an activation curve; ``lambda_eff`` applies to ``(prev, cycle]``."""
    header = ["cycle", "activated_count", "lambda_eff"]
    lam = np.concatenate([[np.nan], curve.lambda_eff]) if curve.n_cycles.size else np.zeros(0)
    rows = np.column_stack([curve.n_cycles, curve.activated, lam])
    return header, rows


def cycle_grid(n_max: float, per_decade: int = 10) -> np.ndarray:
    """Cycle counts ``0, 1, ...`` log-spaced up to ``n_max`` (integers, unique)."""
    if n_max < 1:
        return np.zeros(1)
    k = int(math.ceil(per_decade * math.log10(n_max))) + 1
    n = np.unique(np.round(np.logspace(0.0, math.log10(n_max), max(k, 2))))
    return np.concatenate([[0.0], n])


def background_sweep(
    params: MaterialParams,
    epsilons: Sequence[float],
    cycles: Sequence[float],
    grid: Optional[RadialGrid] = None,
    mapper=map,
    keep_states: bool = False,
    **solver_kw,
):
    """Activation curves for nitrogen hole cross sections ``epsilon * sigma_Np``.

    ``cycles`` are the sampling points (see :func:`cycle_grid`). The
    ``lambda_eff`` of every curve is referenced to the increments of the
    background-free run (``epsilon = 0``), which therefore has
    ``lambda_eff = 1`` by construction. ``mapper`` (e.g. an executor's
    ``map``) runs the independent solves. Returns ``{epsilon: curve}`` or,
    with ``keep_states``, ``{epsilon: (curve, states)}``.
    """
    cycles = np.asarray(cycles, dtype=float)
    times = cycles * params.cycle_time_s

    def run(eps):
        p = params.with_background_scale(eps, params.sigma_Np_um2)
        states = simulate(p, times, grid=grid, **solver_kw)
        return activated_ancillas(p, states), states

    todo = [0.0] + [float(e) for e in epsilons if e != 0]
    results = dict(zip(todo, mapper(run, todo)))
    ref_inc = results[0.0][0].increments
    out = {}
    for eps in epsilons:
        curve, states = results[float(eps)]
        curve = ActivationCurve(curve.n_cycles, curve.activated, ref_inc)
        out[eps] = (curve, states) if keep_states else curve
    return out
