import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from advecta.config import build_fields, build_grid, build_noise, build_sets, build_sim_config, parse_config
from advecta.dstm import KalmanBelief
from advecta.errors import ConfigurationError, DataValidationError
from advecta.io import (
    atomic_write,
    decode_pgm,
    encode_pgm,
    format_filter_output,
    format_frame,
    format_frames,
    format_matrix,
    format_spectrum,
    format_truth,
    parse_filter_output,
    parse_frames,
    parse_matrix,
    parse_spectrum,
    parse_truth,
    quiver_svg,
    to_gray,
)
from advecta.spectral import GridSpec, build_wavenumber_sets

floats = st.floats(-1e12, 1e12, allow_nan=False, allow_infinity=False)


class TestFrames:
    @given(arrays(np.float64, (3, 4, 6), elements=floats))
    def test_round_trip_exact(self, frames):
        times = np.array([0.0, 0.5, 1.0])
        got, t = parse_frames(format_frames(frames, times))
        assert np.array_equal(got, frames) and np.array_equal(t, times)

    def test_single_grid_block(self):
        f, t = parse_frames(format_frame(np.eye(4)))
        assert f.shape == (1, 4, 4) and t[0] == 0

    def test_trailing_garbage_reports_line(self):
        text = format_frame(np.zeros((2, 2))) + "junk\n"
        with pytest.raises(DataValidationError, match=r"<frames>:4:"):
            parse_frames(text)

    @pytest.mark.parametrize("text,line", [
        ("GRID 2 2\n0 0\n0\n", 3),
        ("GRID 2 2\n0 0\n0 x\n", 3),
        ("GRID 3 2\n0 0\n0 0\n0 0\n", 1),
        ("FRAME 0\nGRID 2 2\n0 0\n0 nan\n", 4),
        ("FRAME 0\nGRID 2 2\n0 0\n", 3),
    ])
    def test_malformed(self, text, line):
        with pytest.raises(DataValidationError, match=rf":{line}:"):
            parse_frames(text)

    def test_mixed_shapes(self):
        text = format_frames([np.zeros((2, 2))], [0]) + format_frames([np.zeros((4, 4))], [1])
        with pytest.raises(DataValidationError):
            parse_frames(text)

    def test_empty(self):
        with pytest.raises(DataValidationError):
            parse_frames("\n\n")


class TestSpectraAndMatrices:
    def test_spectrum_round_trip(self, rng):
        sets = build_wavenumber_sets(GridSpec(6, 4))
        v = rng.standard_normal(sets.dim)
        got, shape, form = parse_spectrum(format_spectrum(v, sets))
        assert np.array_equal(got, v) and shape == (6, 4) and form == 18
        assert format_spectrum(v, sets).splitlines()[0] == f"SPEC {sets.dim} 6 4 18"

    def test_spectrum_bad_form(self):
        with pytest.raises(DataValidationError):
            parse_spectrum("SPEC 1 2 2 17\n0\n")

    def test_spectrum_trailing(self):
        with pytest.raises(DataValidationError, match=":3:"):
            parse_spectrum("SPEC 1 2 2 18\n0\n1\n")

    @given(arrays(np.float64, (5, 5), elements=floats))
    def test_matrix_round_trip(self, g):
        assert np.array_equal(parse_matrix(format_matrix(g)), g)

    def test_matrix_short_row(self):
        with pytest.raises(DataValidationError, match=":2:"):
            parse_matrix("GMAT 2\n1\n1 2\n")


class TestFilterAndTruth:
    def test_filter_round_trip(self, rng):
        A = rng.standard_normal((4, 4))
        b = KalmanBelief(rng.standard_normal(4), A @ A.T)
        out = parse_filter_output(format_filter_output([1.0, 2.0], [b, b], with_cov=True))
        assert len(out) == 2
        t, m, c = out[1]
        assert t == 2.0 and np.array_equal(m, b.mean) and np.array_equal(c, b.cov)
        (_, _, c0), = parse_filter_output(format_filter_output([1.0], [b]))
        assert c0 is None

    def test_truth_round_trip(self, rng):
        sets = build_wavenumber_sets(GridSpec(4, 4))
        a, b = rng.standard_normal((2, 3, sets.dim))
        t, a2, b2, shape, form = parse_truth(format_truth([0, 1, 2], a, b, sets))
        assert np.array_equal(a, a2) and np.array_equal(b, b2) and shape == (4, 4)


class TestImages:
    def test_min_max(self):
        px, lo, hi = to_gray(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert px.ravel().tolist() == [0, 255, 255, 0] and (lo, hi) == (0.0, 1.0)

    def test_constant_is_uniform_gray(self):
        px, _, _ = to_gray(np.full((3, 3), 7.0))
        assert np.all(px == px[0, 0])

    @given(arrays(np.uint8, (5, 7)))
    def test_pgm_round_trip(self, px):
        assert np.array_equal(decode_pgm(encode_pgm(px)), px)

    def test_pgm_header(self):
        assert encode_pgm(np.zeros((2, 3), np.uint8)).startswith(b"P5\n3 2\n255\n")

    @pytest.mark.parametrize("data", [b"P2\n1 1\n255\n\x00", b"P5\n2 2\n255\n\x00", b"P5\n1"])
    def test_bad_pgm(self, data):
        with pytest.raises(DataValidationError):
            decode_pgm(data)

    @pytest.mark.parametrize("sub", [1, 2, 4, 5])
    def test_quiver_segment_count(self, sub):
        cfg = parse_config("grid: {n1: 20, n2: 20}\nfields: {velocity: {kind: vortex}}\n")
        v = build_fields(cfg, build_grid(cfg)).velocity
        svg = quiver_svg(v, subsample=sub)
        assert len(re.findall(r"<line ", svg)) == 20 * 20 // sub

    def test_quiver_rejects_bad_subsample(self):
        with pytest.raises(ValueError):
            quiver_svg(np.zeros((2, 2, 2)), subsample=0)


class TestAtomicWrite:
    def test_writes_text_and_bytes(self, tmp_path):
        atomic_write(tmp_path / "a" / "x.txt", "hi")
        atomic_write(tmp_path / "y.bin", b"\x00\x01")
        assert (tmp_path / "a" / "x.txt").read_text() == "hi"
        assert (tmp_path / "y.bin").read_bytes() == b"\x00\x01"
        assert not list(tmp_path.glob(".*tmp"))


class TestConfig:
    def test_missing_field_names_it(self):
        cfg = parse_config("grid: {n1: 8}\n", "c.yaml")
        with pytest.raises(ConfigurationError, match=r"c.yaml:1: 'grid' is missing required field 'n2'"):
            build_grid(cfg)

    def test_bad_value_reports_line(self):
        cfg = parse_config("grid:\n  n1: 8\n  n2: eight\n", "c.yaml")
        with pytest.raises(ConfigurationError, match=r"c.yaml:3: 'grid.n2'"):
            build_grid(cfg)

    def test_yaml_syntax_error(self):
        with pytest.raises(ConfigurationError, match="c.yaml:2"):
            parse_config("grid: {n1: 8\nfoo: [\n", "c.yaml")

    def test_odd_grid(self):
        with pytest.raises(ConfigurationError):
            build_grid(parse_config("grid: {n1: 7, n2: 8}\n"))

    def test_per_mode_noise(self):
        cfg = parse_config("grid: {n1: 4, n2: 4}\nnoise: {a: 1.0, h: [1, 2, 3, 4, 5, 6, 7, 8, 9]}\n")
        noise = build_noise(cfg, build_sets(cfg, build_grid(cfg)))
        assert np.array_equal(noise.h, np.arange(1.0, 10.0))
        bad = parse_config("grid: {n1: 4, n2: 4}\nnoise: {h: [1, 2]}\n", "c.yaml")
        with pytest.raises(ConfigurationError, match="noise.h"):
            build_noise(bad, build_sets(bad, build_grid(bad)))

    def test_sim_config(self):
        text = ("grid: {n1: 8, n2: 8}\ntime: {steps: 3}\nfields: {velocity: {kind: constant, value: [0.1, 0]}}\n"
                "noise: {density: 0.01}\nsource_sink: {mode: ar1, rho: 0.5, tau_beta: 0.1}\n")
        sim = build_sim_config(parse_config(text), seed=7)
        assert sim.t_steps == 3 and sim.seed == 7 and sim.source_sink.mode == "ar1"
        assert np.allclose(sim.fields.velocity[..., 0], 0.1)
