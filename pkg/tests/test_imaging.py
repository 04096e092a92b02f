import os
import tempfile

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aidsim import imaging as im
from aidsim.imaging import FluorescenceImage, RingError, RingSpec

counts = arrays(np.int64, (50, 50), elements=st.integers(0, 1000))


def disk(radius, value=1.0):
    return lambda r: np.where(r < radius, value, 0.0)


class TestImage:
    def test_rejects_small_scan(self):
        with pytest.raises(ValueError, match="40"):
            FluorescenceImage(np.zeros((40, 40), dtype=int), pitch=0.8)

    def test_rejects_negative_and_fractional(self):
        with pytest.raises(ValueError):
            FluorescenceImage(-np.ones((50, 50), dtype=int))
        with pytest.raises(ValueError):
            FluorescenceImage(np.full((50, 50), 0.5))

    def test_center_inside(self):
        with pytest.raises(ValueError):
            FluorescenceImage(np.zeros((50, 50), dtype=int), center=(60, 10))


class TestRingSpec:
    def test_invariants(self):
        with pytest.raises(ValueError):
            RingSpec(1.0, 3.0)
        with pytest.raises(ValueError):
            RingSpec(5.0, 0.0)

    def test_half_open(self):
        sel = RingSpec(5.0, 2.0).contains([3.9, 4.0, 5.0, 5.9, 6.0])
        assert sel.tolist() == [False, True, True, True, False]


class TestSynthesis:
    def test_zero_profile(self):
        img = im.synthesize_image(lambda r: np.zeros_like(r))
        assert img.pixels.sum() == 0

    def test_uniform_mean(self):
        rho, pitch, ka = 2.0, 0.8, 22.0
        img = im.synthesize_image(lambda r: np.full_like(r, rho), ka, pitch, seed=4, shape=(120, 120))
        lam = rho * pitch * pitch * ka
        assert abs(img.pixels.mean() - lam) < 4 * np.sqrt(lam / img.pixels.size)

    def test_seeded(self):
        a = im.synthesize_image(disk(10.0), seed=9)
        b = im.synthesize_image(disk(10.0), seed=9)
        c = im.synthesize_image(disk(10.0), seed=10)
        assert np.array_equal(a.pixels, b.pixels)
        assert not np.array_equal(a.pixels, c.pixels)

    def test_table_profile(self):
        img = im.synthesize_image(([0.0, 30.0], [1.0, 1.0]), noise=False)
        assert np.all(img.pixels[img.distances() <= 30.0] == round(0.64 * 22))

    def test_negative_profile_rejected(self):
        with pytest.raises(ValueError):
            im.synthesize_image(lambda r: -np.ones_like(r))

    def test_disk_roundtrip(self):
        img = im.synthesize_image(disk(14.0, 5.0), noise=False)
        prof = im.radial_profile(img)
        filled = prof.pixel_counts > 0
        radii, mean = prof.radii[filled], prof.values[filled] / prof.pixel_counts[filled]
        edge = radii[np.argmax(mean < 0.5 * mean.max())]
        assert abs(edge - 14.0) <= 1.0

    def test_forward_front_profile(self):
        f = im.capture_front_profile(im.carriers_for_front(11.5, 70.0), 70.0)
        assert f(np.array([11.5]))[0] == pytest.approx(70.0 * (1 - np.exp(-1)))
        assert f(np.array([0.1]))[0] > 69.9
        assert np.all(np.diff(f(np.linspace(0.1, 30, 50))) <= 0)


class TestRadialProfile:
    @given(counts)
    def test_partition(self, px):
        img = FluorescenceImage(px)
        assert im.radial_profile(img).total() == px.sum()
        assert im.radial_profile(img).pixel_counts.sum() == px.size

    @given(counts)
    def test_rotation_invariance(self, px):
        a = im.radial_profile(FluorescenceImage(px)).values
        b = im.radial_profile(FluorescenceImage(np.rot90(px).copy())).values
        assert np.array_equal(a, b)

    def test_uniform(self):
        img = FluorescenceImage(np.full((50, 50), 3))
        prof = im.radial_profile(img)
        assert np.array_equal(prof.values, 3 * prof.pixel_counts)

    def test_point_source(self):
        px = np.zeros((51, 51), dtype=int)
        px[25, 25] = 17
        prof = im.radial_profile(FluorescenceImage(px))
        assert prof.values[0] == 17 and prof.values[1:].sum() == 0

    def test_raw_array_needs_geometry(self):
        with pytest.raises(ValueError):
            im.radial_profile(np.zeros((50, 50)))


class TestDifferential:
    def test_identical(self):
        a = im.synthesize_image(disk(10.0), seed=1)
        assert not im.differential_image(a, a).any()

    def test_constant_offset(self):
        a = im.synthesize_image(disk(10.0), seed=1)
        b = FluorescenceImage(a.pixels + 7, a.pitch, a.center)
        assert np.all(im.differential_image(b, a) == 7)

    def test_geometry_mismatch(self):
        a = FluorescenceImage(np.zeros((50, 50), dtype=int))
        b = FluorescenceImage(np.zeros((50, 50), dtype=int), pitch=0.9)
        with pytest.raises(ValueError):
            im.differential_image(a, b)

    def test_siv_pair_dark_ring(self):
        on, off = im.siv_image_pair(noise=False)
        d = im.radial_profile(im.differential_image(on, off), geometry=on)
        ring = d.values[8:16]
        assert np.all(ring <= 0) and ring.min() < 0
        assert d.radii[np.argmin(d.values)] == pytest.approx(11.0, abs=1.5)


class TestContrast:
    def setup_method(self):
        self.on, self.off = im.siv_image_pair(noise=False)
        self.p_on, self.p_off = im.radial_profile(self.on), im.radial_profile(self.off)

    def test_ring_integral(self):
        st_ = im.ring_contrast(self.p_on, self.p_off, RingSpec(13.0, 3.0))
        assert st_.integrated == self.p_on.values[12:15].sum()
        assert st_.integrated == st_.radial_profile.sum()
        assert st_.differential == st_.integrated - st_.integrated_off

    def test_identical_profiles(self):
        st_ = im.ring_contrast(self.p_off, self.p_off, RingSpec(13.0, 3.0))
        assert st_.contrast == 0.0 and st_.differential == 0.0 and st_.snr == 0.0

    @given(st.floats(1e-3, 1e3))
    def test_degree_zero_homogeneity(self, c):
        a = im.RadialProfile(self.p_on.radii, self.p_on.values * c, self.p_on.pixel_counts, 1.0)
        b = im.RadialProfile(self.p_off.radii, self.p_off.values * c, self.p_off.pixel_counts, 1.0)
        ring = RingSpec(12.0, 4.0)
        ref = im.ring_contrast(self.p_on, self.p_off, ring, reference_on_at_resonance=123.0)
        got = im.ring_contrast(a, b, ring, reference_on_at_resonance=123.0 * c)
        assert got.contrast == pytest.approx(ref.contrast, rel=1e-12)

    def test_zero_denominator(self):
        z = im.RadialProfile(np.arange(5.0), np.zeros(5), np.ones(5), 1.0)
        with pytest.raises(RingError):
            im.ring_contrast(z, z, RingSpec(2.0, 2.0))

    def test_nv_sign(self):
        s = im.ring_contrast(self.p_on, self.p_off, RingSpec(12.0, 3.0))
        n = im.ring_contrast(self.p_on, self.p_off, RingSpec(12.0, 3.0), sign=-1.0)
        assert n.differential == -s.differential and n.contrast == -s.contrast


class TestSweep:
    def test_identical_images_zero_table(self):
        on, _ = im.siv_image_pair(seed=3)
        sw = im.sweep_ring(on, on, [5.0, 10.0], [1.0, 2.0])
        assert len(sw.rows) == 4
        assert not np.any(sw.column("dI_counts")) and not np.any(sw.column("contrast"))
        assert sw.best["dI"] == (5.0, 1.0)

    def test_tie_break_is_smallest_r_then_w(self):
        px = np.full((50, 50), 10)
        on = FluorescenceImage(px)
        off = FluorescenceImage(px)
        sw = im.sweep_ring(on, off, [9.0, 3.0, 6.0], [2.0, 1.0])
        assert [r[:2] for r in sw.rows][:2] == [(3.0, 1.0), (3.0, 2.0)]
        assert sw.best["snr"] == (3.0, 1.0)

    def test_skips_invalid_rings(self):
        on, off = im.siv_image_pair(noise=False)
        sw = im.sweep_ring(on, off, [1.0, 40.0, 10.0], [4.0, 1.0])
        assert {r[:2] for r in sw.rows} == {(1.0, 1.0), (10.0, 1.0), (10.0, 4.0)}

    def test_nv_mode_masks_center(self):
        on, off = im.siv_image_pair(noise=False)
        siv = im.sweep_ring(on, off, [2.0], [4.0])
        nv = im.sweep_ring(on, off, [2.0], [4.0], mode="nv", inner_mask=2.0)
        assert nv.rows[0][2] <= siv.rows[0][2]

    def test_empty_grid(self):
        on, off = im.siv_image_pair(noise=False)
        with pytest.raises(ValueError):
            im.sweep_ring(on, off, [], [1.0])


class TestIO:
    @given(arrays(np.int64, (50, 52), elements=st.integers(0, 65535)))
    def test_pgm_roundtrip(self, px):
        img = FluorescenceImage(px)
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "x.pgm")
            im.write_pgm(img, path)
            assert np.array_equal(im.read_pgm(path).pixels, px)

    def test_csv_roundtrip(self, tmp_path):
        img, _ = im.siv_image_pair(seed=2)
        im.write_image_csv(img, tmp_path / "a.csv")
        assert np.array_equal(im.read_image_csv(tmp_path / "a.csv").pixels, img.pixels)

    def test_pgm_overflow(self, tmp_path):
        img = FluorescenceImage(np.full((50, 50), 70000))
        with pytest.raises(ValueError):
            im.write_pgm(img, tmp_path / "x.pgm")
