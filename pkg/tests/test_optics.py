from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghostbench import ioutil, optics
from ghostbench.errors import ConfigError
from ghostbench.optics import ObjectMask, OpticalConfig


def make_config(**overrides):
    kwargs = dict(wavelength=650e-9, z_source_to_object=0.4, z_source_to_reference=0.5,
                  source_width=1e-3, grid_n=100, pixel_pitch=15e-6)
    kwargs.update(overrides)
    return OpticalConfig(**kwargs)


class TestCoherenceLength:
    def test_published_wide_aperture_value(self):
        # l_c = lambda * z / D inverted against the 276.7 um calibration point
        cfg = make_config(source_width=0.9397e-3)
        assert optics.coherence_length(cfg) == pytest.approx(276.7e-6, rel=2e-4)

    def test_published_narrow_aperture_value(self):
        cfg = make_config(source_width=3.779e-3, pixel_pitch=15e-6)
        assert optics.coherence_length(cfg) == pytest.approx(68.8e-6, rel=2e-4)

    def test_doubling_source_width_halves_lc(self):
        narrow = make_config(source_width=1e-3)
        wide = make_config(source_width=2e-3)
        ratio = optics.coherence_length(narrow) / optics.coherence_length(wide)
        assert ratio == pytest.approx(2.0, rel=1e-12)

    @given(wavelength=st.floats(200e-9, 2e-6), z=st.floats(0.05, 5.0),
           d1=st.floats(1e-4, 5e-3), d2=st.floats(1e-4, 5e-3))
    @settings(max_examples=50)
    def test_monotone_in_geometry(self, wavelength, z, d1, d2):
        lc = lambda d, zz: wavelength * zz / d
        if d1 < d2:
            assert lc(d1, z) > lc(d2, z)
        # configs only matter through the formula; check against the op
        cfg = make_config(wavelength=wavelength, z_source_to_object=z, source_width=d1,
                          pixel_pitch=min(15e-6, lc(d1, z) / 2))
        assert optics.coherence_length(cfg) == pytest.approx(lc(d1, z), rel=1e-12)

    def test_config_for_coherence_length_roundtrip(self):
        cfg = optics.config_for_coherence_length(make_config(), 135.5e-6)
        assert optics.coherence_length(cfg) == pytest.approx(135.5e-6, rel=1e-12)


class TestOpticalConfigValidation:
    @pytest.mark.parametrize("field", ["wavelength", "z_source_to_object",
                                       "z_source_to_reference", "source_width", "pixel_pitch"])
    def test_rejects_nonpositive_lengths(self, field):
        with pytest.raises(ConfigError):
            make_config(**{field: 0.0})
        with pytest.raises(ConfigError):
            make_config(**{field: -1e-6})

    def test_rejects_small_grid(self):
        with pytest.raises(ConfigError):
            make_config(grid_n=7)

    def test_rejects_unresolvable_speckle(self):
        # l_c = 26 um < 2 * 15 um
        with pytest.raises(ConfigError, match="pixel pitch"):
            make_config(source_width=1e-2)

    def test_rejects_bad_oversample(self):
        with pytest.raises(ConfigError):
            make_config(source_oversample=0)


def bruteforce_double_slit(grid_n, pitch, width, height, separation, center):
    """Integer-exact rasterization oracle: all lengths as Fractions of a meter."""
    pitch, width, height, separation = map(Fraction, map(str, (pitch, width, height, separation)))
    cx, cy = (Fraction(str(c)) for c in center)
    mask = np.zeros((grid_n, grid_n))
    for i in range(grid_n):
        y = (i - grid_n // 2) * pitch
        for j in range(grid_n):
            x = (j - grid_n // 2) * pitch
            for slit_cx in (cx - separation / 2, cx + separation / 2):
                if abs(x - slit_cx) <= width / 2 and abs(y - cy) <= height / 2:
                    mask[i, j] = 1.0
    return mask


class TestDoubleSlit:
    def test_counts_match_bruteforce_oracle(self):
        cfg = make_config()
        mask = optics.make_double_slit(cfg, 1e-4, 1e-3, 2e-4)
        oracle = bruteforce_double_slit(100, "15e-6", 1e-4, 1e-3, 2e-4, (0, 0))
        assert np.array_equal(mask.values, oracle)
        # 0.1 mm / 15 um rasterizes to 7 columns, 1.0 mm to 67 rows
        cols = mask.values.any(axis=0)
        widths = np.diff(np.flatnonzero(np.diff(np.concatenate([[0], cols, [0]]))))[::2]
        assert list(widths) == [7, 7]
        rows = mask.values.any(axis=1)
        assert int(rows.sum()) == 67
        assert int(mask.values.sum()) == 2 * 7 * 67

    def test_overlapping_slits_rejected(self):
        with pytest.raises(ConfigError, match="overlap"):
            optics.make_double_slit(make_config(), 2e-4, 1e-3, 2e-4)

    def test_out_of_grid_rejected(self):
        with pytest.raises(ConfigError, match="outside"):
            optics.make_double_slit(make_config(), 1e-4, 2e-3, 2e-4)
        with pytest.raises(ConfigError, match="outside"):
            optics.make_double_slit(make_config(), 1e-4, 1e-3, 1.5e-3)

    def test_mirror_symmetry_about_pixel_boundary(self):
        # x = -pitch/2 is a pixel boundary; mirroring there is exactly fliplr
        cfg = make_config()
        mask = optics.make_double_slit(cfg, 1e-4, 1e-3, 2e-4, center=(-7.5e-6, 0.0))
        assert np.array_equal(mask.values, np.fliplr(mask.values))

    def test_nonzero_total_matches_oracle_for_odd_geometry(self):
        cfg = make_config(grid_n=64)
        mask = optics.make_double_slit(cfg, 7e-5, 4.2e-4, 1.9e-4, center=(1e-5, -2e-5))
        oracle = bruteforce_double_slit(64, "15e-6", 7e-5, 4.2e-4, 1.9e-4, (1e-5, -2e-5))
        assert np.array_equal(mask.values, oracle)


class TestObjectMask:
    def test_rejects_out_of_range(self):
        with pytest.raises(ConfigError):
            ObjectMask(np.full((8, 8), 1.5), 1e-5)
        with pytest.raises(ConfigError):
            ObjectMask(np.full((8, 8), -0.1), 1e-5)

    def test_rejects_all_opaque(self):
        with pytest.raises(ConfigError, match="opaque"):
            ObjectMask(np.zeros((8, 8)), 1e-5)

    def test_rejects_non_square(self):
        with pytest.raises(ConfigError):
            ObjectMask(np.ones((8, 9)), 1e-5)

    def test_values_are_immutable(self):
        mask = ObjectMask(np.ones((8, 8)), 1e-5)
        with pytest.raises(ValueError):
            mask.values[0, 0] = 0.5


class TestPgm:
    def test_roundtrip_binary_16bit(self, tmp_path):
        cfg = make_config(grid_n=16)
        rng = np.random.default_rng(0)
        mask = ObjectMask(rng.uniform(0, 1, (16, 16)), cfg.pixel_pitch)
        path = tmp_path / "m.pgm"
        optics.save_mask_pgm(mask, path, maxval=65535)
        back = optics.load_mask_pgm(path, cfg)
        assert np.max(np.abs(back.values - mask.values)) <= 0.5 / 65535

    def test_roundtrip_ascii_8bit(self, tmp_path):
        cfg = make_config(grid_n=12)
        rng = np.random.default_rng(1)
        mask = ObjectMask(rng.uniform(0, 1, (12, 12)), cfg.pixel_pitch)
        path = tmp_path / "m.pgm"
        optics.save_mask_pgm(mask, path, maxval=255, binary=False)
        back = optics.load_mask_pgm(path, cfg)
        assert np.max(np.abs(back.values - mask.values)) <= 0.5 / 255

    def test_full_grid_binary_load(self, tmp_path):
        cfg = make_config(grid_n=100)
        rng = np.random.default_rng(2)
        samples = rng.integers(0, 65536, size=(100, 100))
        path = tmp_path / "full.pgm"
        ioutil.write_pgm(path, samples, 65535)
        mask = optics.load_mask_pgm(path, cfg)
        assert mask.grid_n == 100
        assert mask.values.max() <= 1.0

    def test_midscale_sample_value(self, tmp_path):
        path = tmp_path / "p.pgm"
        path.write_bytes(b"P2\n8 8\n255\n" + (b"128 " * 64))
        cfg = make_config(grid_n=8)
        mask = optics.load_mask_pgm(path, cfg)
        assert mask.values[0, 0] == pytest.approx(128 / 255)
        assert mask.values[0, 0] == pytest.approx(0.5019607843137255)

    def test_all_ones_is_valid(self, tmp_path):
        path = tmp_path / "p.pgm"
        path.write_bytes(b"P2\n8 8\n255\n" + (b"255 " * 64))
        mask = optics.load_mask_pgm(path, make_config(grid_n=8))
        assert (mask.values == 1.0).all()

    def test_all_zero_rejected(self, tmp_path):
        path = tmp_path / "p.pgm"
        path.write_bytes(b"P2\n8 8\n255\n" + (b"0 " * 64))
        with pytest.raises(ConfigError, match="all zero"):
            optics.load_mask_pgm(path, make_config(grid_n=8))

    def test_dimension_mismatch_rejected(self, tmp_path):
        path = tmp_path / "p.pgm"
        path.write_bytes(b"P2\n8 8\n255\n" + (b"7 " * 64))
        with pytest.raises(ConfigError, match="grid"):
            optics.load_mask_pgm(path, make_config(grid_n=100))

    def test_non_square_rejected(self, tmp_path):
        path = tmp_path / "p.pgm"
        path.write_bytes(b"P2\n8 4\n255\n" + (b"7 " * 32))
        with pytest.raises(ConfigError, match="square"):
            optics.load_mask_pgm(path, make_config(grid_n=8))

    def test_comments_in_header(self, tmp_path):
        path = tmp_path / "p.pgm"
        path.write_bytes(b"P2 # magic\n# a comment line\n8 8\n255\n" + (b"9 " * 64))
        samples, maxval = ioutil.read_pgm(path)
        assert samples.shape == (8, 8) and maxval == 255

    @pytest.mark.parametrize("payload", [
        b"P3\n8 8\n255\n" + b"1 " * 64,        # wrong magic
        b"P2\n8 8\n",                          # truncated header
        b"P2\n8 8\n70000\n" + b"1 " * 64,      # maxval too large
        b"P2\n8 8\n255\n" + b"1 " * 63,        # short raster
        b"P2\n8 8\n255\n" + b"300 " * 64,      # sample above maxval
        b"P5\n4 4\n255\n" + b"\x01" * 15,      # short binary raster
        b"P5\n4 4\n255\n" + b"\x01" * 17,      # trailing garbage
    ])
    def test_malformed_rejected(self, tmp_path, payload):
        path = tmp_path / "bad.pgm"
        path.write_bytes(payload)
        with pytest.raises(ConfigError):
            ioutil.read_pgm(path)


class TestConfigFile:
    def test_roundtrip(self, tmp_path):
        cfg = make_config(source_width=0.9397e-3)
        path = tmp_path / "bench.cfg"
        optics.save_config(cfg, path)
        back = optics.load_config(path)
        assert back.wavelength == cfg.wavelength
        assert back.source_width == cfg.source_width
        assert back.grid_n == cfg.grid_n

    def test_comments_and_spacing(self, tmp_path):
        path = tmp_path / "bench.cfg"
        path.write_text(
            "# bench geometry\nwavelength_m = 650e-9\nz_m=0.4\nz1_m =0.5\n"
            "source_width_m= 1e-3\ngrid_n=100\npixel_pitch_m=15e-6\n")
        cfg = optics.load_config(path)
        assert cfg.z_source_to_reference == 0.5

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bench.cfg"
        path.write_text("wavelength_m=650e-9\nz_m=0.4\nz1_m=0.5\nsource_width_m=1e-3\n"
                        "grid_n=100\npixel_pitch_m=15e-6\nbogus=1\n")
        with pytest.raises(ConfigError, match="unknown"):
            optics.load_config(path)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "bench.cfg"
        path.write_text("wavelength_m=650e-9\n")
        with pytest.raises(ConfigError, match="missing"):
            optics.load_config(path)

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            ioutil.parse_kv_text("a=1\na=2\n")
