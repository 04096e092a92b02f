"""Synthetic fluorescence scans and ring-based extraction of the spin signal.

Pixels are assigned to 1-D annuli by the distance of the pixel centre from
the illumination point: annulus ``i`` collects ``[r_i - a/2, r_i + a/2)`` with
``r_i = i a`` for annulus width ``a``. Every pixel therefore lands in exactly
one annulus and annulus sums partition the image total.

The contrast denominator is read as ``I_on(nu_0) + I_off``, i.e.
``C = 2 (I_on(nu) - I_off) / (I_on(nu_0) + I_off)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import k0

from . import _kernels
from .stochastics import RngStream

__all__ = [
    "FluorescenceImage",
    "RingSpec",
    "RadialProfile",
    "RingStats",
    "RingSweep",
    "RingError",
    "capture_front_profile",
    "carriers_for_front",
    "synthesize_image",
    "differential_image",
    "radial_profile",
    "ring_contrast",
    "sweep_ring",
    "write_image_csv",
    "read_image_csv",
    "write_pgm",
    "read_pgm",
    "siv_image_pair",
    "annulus_index",
]

MIN_SCAN_UM = 40.0


class RingError(ValueError):
    """Ring statistics are undefined (zero denominator, ring outside profile)."""


@dataclass(frozen=True)
class FluorescenceImage:
    """Photon counts on a square pixel grid.

    ``center`` is the illumination point in (row, column) pixel
    coordinates; pixel ``(i, j)`` has its centre at ``(i, j)``.
    """

    pixels: np.ndarray
    pitch: float = 0.8
    center: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError("pixels must be a 2-D grid")
        if not np.issubdtype(px.dtype, np.integer):
            if np.any(px != np.round(px)):
                raise ValueError("pixel counts must be integers")
            px = px.astype(np.int64)
        if px.size and px.min() < 0:
            raise ValueError("pixel counts must be >= 0")
        if self.pitch <= 0:
            raise ValueError("pitch must be > 0")
        side = min(px.shape) * self.pitch
        if side < MIN_SCAN_UM - 1e-9:
            raise ValueError(f"scan covers {side:.3g} um; at least {MIN_SCAN_UM} um per side required")
        c = self.center
        if c is None:
            c = ((px.shape[0] - 1) / 2.0, (px.shape[1] - 1) / 2.0)
        c = (float(c[0]), float(c[1]))
        if not (-0.5 <= c[0] <= px.shape[0] - 0.5 and -0.5 <= c[1] <= px.shape[1] - 0.5):
            raise ValueError(f"center {c} lies outside the image")
        object.__setattr__(self, "pixels", px)
        object.__setattr__(self, "center", c)

    @property
    def shape(self):
        return self.pixels.shape

    def distances(self) -> np.ndarray:
        """Pixel-centre distance from the illumination point (um)."""
        rows, cols = np.indices(self.shape, dtype=float)
        return self.pitch * np.hypot(rows - self.center[0], cols - self.center[1])

    def same_geometry(self, other: "FluorescenceImage") -> bool:
        return self.shape == other.shape and self.pitch == other.pitch and self.center == other.center


@dataclass(frozen=True)
class RingSpec:
    """Ring of mean radius ``r`` and width ``w`` (um)."""

    r: float
    w: float

    def __post_init__(self):
        if self.r < 0 or self.w <= 0:
            raise ValueError("need r >= 0 and w > 0")
        if self.r - self.w / 2 < -1e-12:
            raise ValueError(f"ring r={self.r}, w={self.w} extends past the centre")

    def contains(self, radii) -> np.ndarray:
        radii = np.asarray(radii, dtype=float)
        eps = 1e-9
        return (radii >= self.r - self.w / 2 - eps) & (radii < self.r + self.w / 2 - eps)


@dataclass(frozen=True)
class RadialProfile:
    """Annulus sums ``values[i]`` centred on ``radii[i]`` with ``pixel_counts`` members."""

    radii: np.ndarray
    values: np.ndarray
    pixel_counts: np.ndarray
    width: float

    def total(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True)
class RingStats:
    ring: RingSpec
    radial_profile: np.ndarray
    integrated: float
    integrated_off: float
    differential: float
    contrast: float
    snr: float


@dataclass
class RingSweep:
    """Full-factorial ring table and argmax cells per figure of merit."""

    rows: list
    best: Dict[str, Optional[Tuple[float, float]]] = field(default_factory=dict)

    HEADER = ("r_um", "w_um", "I_on_counts", "I_off_counts", "dI_counts", "contrast", "snr")

    def column(self, name: str) -> np.ndarray:
        return np.array([row[self.HEADER.index(name)] for row in self.rows], dtype=float)


# ---------------------------------------------------------------------------
# forward model


def capture_front_profile(
    n_carriers: float,
    ancilla_density: float,
    capture_length: float = 1.0,
    thickness: float = 1.0,
    r_min: float = 0.05,
) -> Callable[[np.ndarray], np.ndarray]:
    """Activated-ancilla density (um^-3) after ``n_carriers`` captured around the origin.

    Carriers spread with the 2-D diffusion-capture kernel
    ``g(r) = K0(r / L) / (2 pi L^2)`` (unit integral over the plane) and
    saturate a finite ancilla density:
    ``rho(r) = rho_a (1 - exp(-N g(r) / (rho_a h)))``.
    Dilute regions are linear in ``N``; a saturated core grows with ``N``.
    """
    if n_carriers < 0 or ancilla_density < 0 or capture_length <= 0 or thickness <= 0:
        raise ValueError("invalid forward-model parameters")
    L = capture_length

    def profile(r):
        r = np.maximum(np.asarray(r, dtype=float), r_min)
        if ancilla_density == 0:
            return np.zeros_like(r)
        g = k0(r / L) / (2.0 * np.pi * L * L)
        return ancilla_density * -np.expm1(-n_carriers * g / (ancilla_density * thickness))

    return profile


def carriers_for_front(front_radius: float, ancilla_density: float, capture_length: float = 1.0,
                       thickness: float = 1.0) -> float:
    """Carrier number that puts ``1 - 1/e`` saturation at ``front_radius``."""
    g = k0(front_radius / capture_length) / (2.0 * np.pi * capture_length**2)
    return ancilla_density * thickness / g


def synthesize_image(
    radial_activation: Union[Callable, Tuple[Sequence[float], Sequence[float]]],
    photons_per_ancilla: float = 22.0,
    pitch: float = 0.8,
    seed: int = 0,
    shape: Tuple[int, int] = (50, 50),
    center: Optional[Tuple[float, float]] = None,
    background: float = 0.0,
    thickness: float = 1.0,
    noise: bool = True,
    stream: str = "image",
) -> FluorescenceImage:
    """Fluorescence scan of a radial activated-ancilla density.

    ``radial_activation`` is either a callable ``rho(r)`` or a table
    ``(r_um, rho)`` (linearly interpolated, zero beyond the last node).
    Expected counts per pixel are ``rho * pitch^2 * thickness * k_a +
    background``; with ``noise`` each pixel is Poisson, otherwise the
    expectation is rounded to the nearest integer.
    """
    if pitch <= 0:
        raise ValueError("pitch must be > 0")
    if photons_per_ancilla < 0 or background < 0:
        raise ValueError("photons_per_ancilla and background must be >= 0")
    geom = FluorescenceImage(np.zeros(shape, dtype=np.int64), pitch, center)
    d = geom.distances()
    if callable(radial_activation):
        rho = np.asarray(radial_activation(d), dtype=float)
    else:
        r_nodes, values = (np.asarray(a, dtype=float) for a in radial_activation)
        rho = np.interp(d, r_nodes, values, right=0.0)
    if np.any(rho < 0):
        raise ValueError("activation profile must be nonnegative")
    expected = rho * pitch * pitch * thickness * photons_per_ancilla + background
    if noise:
        counts = RngStream(seed, stream).generator.poisson(expected)
    else:
        counts = np.rint(expected).astype(np.int64)
    return FluorescenceImage(counts, pitch, geom.center)


def differential_image(on: FluorescenceImage, off: FluorescenceImage) -> np.ndarray:
    """Signed pixel-wise ``on - off``."""
    if not on.same_geometry(off):
        raise ValueError("on and off images differ in shape, pitch or centre")
    return on.pixels.astype(np.int64) - off.pixels.astype(np.int64)


# ---------------------------------------------------------------------------
# ring extraction


def annulus_index(image: FluorescenceImage, width: float = 1.0) -> np.ndarray:
    return np.floor(image.distances() / width + 0.5).astype(np.int64)


def radial_profile(image: Union[FluorescenceImage, np.ndarray], annulus_width: float = 1.0,
                   geometry: Optional[FluorescenceImage] = None) -> RadialProfile:
    """Sum pixels over concentric annuli of width ``annulus_width`` (um).

    A bare array (e.g. a differential image) needs ``geometry`` for the
    pitch and centre.
    """
    if annulus_width <= 0:
        raise ValueError("annulus_width must be > 0")
    if isinstance(image, FluorescenceImage):
        geom, values = image, image.pixels
    else:
        if geometry is None:
            raise ValueError("geometry is required for raw pixel arrays")
        geom, values = geometry, np.asarray(image)
    idx = annulus_index(geom, annulus_width)
    nbins = int(idx.max()) + 1
    sums = _kernels.annulus_sums(np.ascontiguousarray(values, dtype=float), idx, nbins)
    counts = np.bincount(idx.ravel(), minlength=nbins)
    return RadialProfile(np.arange(nbins) * annulus_width, sums, counts, annulus_width)


def _ring_sum(profile: RadialProfile, ring: RingSpec, mask_below: float = 0.0):
    if ring.r + ring.w / 2 - profile.width / 2 > profile.radii[-1] + 1e-9:
        raise RingError(f"ring r={ring.r}, w={ring.w} extends past the profile")
    sel = ring.contains(profile.radii) & (profile.radii >= mask_below)
    return float(profile.values[sel].sum()), profile.values[sel]


def ring_contrast(
    on_profile: RadialProfile,
    off_profile: RadialProfile,
    ring: RingSpec,
    reference_on_at_resonance: Optional[float] = None,
    sign: float = 1.0,
    mask_below: float = 0.0,
) -> RingStats:
    """Integrated ring counts, differential, contrast and shot-noise SNR.

    ``reference_on_at_resonance`` is ``I_on(nu_0)`` for the contrast
    denominator and defaults to this ring's ``I_on``. ``sign = -1`` flips
    the differential (bright-to-dark ancillas). Annuli centred below
    ``mask_below`` are ignored.
    """
    if on_profile.width != off_profile.width:
        raise RingError("profiles use different annulus widths")
    i_on, ring_values = _ring_sum(on_profile, ring, mask_below)
    i_off, _ = _ring_sum(off_profile, ring, mask_below)
    ref = i_on if reference_on_at_resonance is None else reference_on_at_resonance
    denom = ref + i_off
    if denom == 0:
        raise RingError(f"zero contrast denominator for ring r={ring.r}, w={ring.w}")
    diff = sign * (i_on - i_off)
    total = i_on + i_off
    snr = abs(diff) / math.sqrt(total) if total > 0 else 0.0
    return RingStats(ring, ring_values, i_on, i_off, diff, 2.0 * diff / denom, snr)


def sweep_ring(
    on_image: FluorescenceImage,
    off_image: FluorescenceImage,
    r_grid: Sequence[float],
    w_grid: Sequence[float],
    mode: str = "siv",
    inner_mask: float = 2.0,
    annulus_width: float = 1.0,
) -> RingSweep:
    """Evaluate every (r, w) ring; report argmax of ``|dI|``, ``|contrast|`` and SNR.

    ``mode="nv"`` negates the differential and ignores annuli centred inside
    ``inner_mask``. Rings reaching past the centre or the profile, or with a
    zero denominator, are skipped. Ties go to the smallest r, then w.
    """
    if mode not in ("siv", "nv"):
        raise ValueError("mode must be 'siv' or 'nv'")
    if not len(r_grid) or not len(w_grid):
        raise ValueError("r_grid and w_grid must be nonempty")
    if not on_image.same_geometry(off_image):
        raise ValueError("on and off images differ in shape, pitch or centre")
    sign, mask = (-1.0, inner_mask) if mode == "nv" else (1.0, 0.0)
    on_p = radial_profile(on_image, annulus_width)
    off_p = radial_profile(off_image, annulus_width)
    rows = []
    for r in sorted(float(x) for x in r_grid):
        for w in sorted(float(x) for x in w_grid):
            if w <= 0 or r - w / 2 < -1e-12:
                continue
            try:
                st = ring_contrast(on_p, off_p, RingSpec(r, w), sign=sign, mask_below=mask)
            except RingError:
                continue
            rows.append((r, w, st.integrated, st.integrated_off, st.differential, st.contrast, st.snr))
    best = {}
    for key, col, fn in (("dI", 4, abs), ("contrast", 5, abs), ("snr", 6, float)):
        best[key] = None
        top = -math.inf
        for row in rows:  # rows are ordered by (r, w); strict > keeps the first maximum
            v = fn(row[col])
            if v > top:
                top, best[key] = v, (row[0], row[1])
    return RingSweep(rows, best)


# ---------------------------------------------------------------------------
# image I/O


def write_image_csv(image: FluorescenceImage, path) -> None:
    """Plain-text grid, one image row per line."""
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(image.pixels.tolist())


def read_image_csv(path, pitch: float = 0.8, center=None) -> FluorescenceImage:
    with open(path, newline="") as fh:
        rows = [[int(v) for v in row] for row in csv.reader(fh) if row]
    return FluorescenceImage(np.array(rows, dtype=np.int64), pitch, center)


def write_pgm(image: FluorescenceImage, path) -> None:
    """Binary 16-bit portable graymap (big-endian samples)."""
    px = image.pixels
    maxval = int(px.max()) if px.size else 0
    if maxval > 65535:
        raise ValueError(f"pixel count {maxval} exceeds the 16-bit range")
    maxval = max(maxval, 256)  # force two-byte samples
    h, w = px.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(px.astype(">u2").tobytes())


def read_pgm(path, pitch: float = 0.8, center=None) -> FluorescenceImage:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(t) for t in tokens[1:])
    pos += 1
    dtype = ">u2" if maxval > 255 else "u1"
    px = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return FluorescenceImage(px.astype(np.int64), pitch, center)


def siv_image_pair(
    front_radius: float = 11.5,
    carrier_ratio: float = 0.9,
    capture_length: float = 1.0,
    ancilla_density: float = 70.0,
    photons_per_ancilla: float = 22.0,
    background: float = 100.0,
    pitch: float = 0.8,
    shape: Tuple[int, int] = (50, 50),
    noise: bool = True,
    seed: int = 0,
) -> Tuple[FluorescenceImage, FluorescenceImage]:
    """``(on, off)`` scans for dark-to-bright ancillas.

    The off-resonance run activates ancillas out to ``front_radius``; on
    resonance the qubit emits ``carrier_ratio`` times as many carriers, so
    its bright disk is smaller and the differential is a dark ring.
    """
    n_off = carriers_for_front(front_radius, ancilla_density, capture_length)
    images = []
    for tag, n in (("on", carrier_ratio * n_off), ("off", n_off)):
        prof = capture_front_profile(n, ancilla_density, capture_length)
        images.append(
            synthesize_image(prof, photons_per_ancilla, pitch, seed, shape, background=background,
                             noise=noise, stream=f"image-{tag}")
        )
    return images[0], images[1]
