import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from advecta.errors import ConfigurationError, InvalidSpectrumError
from advecta.spectral import (
    GridSpec,
    analysis_matrix,
    basis_matrix,
    build_wavenumber_sets,
    dft2,
    evaluate_basis,
    idft2,
    lattice_cutoff,
    lowpass,
    pack,
    pack_field,
    reconstruct,
    symmetry_residual,
    unpack,
    wavenumbers,
)


def direct_dft(x):
    """O(N^2) double-sum oracle with the 1/N forward normalization."""
    n1, n2 = x.shape
    i, j = np.arange(n1), np.arange(n2)
    out = np.zeros((n1, n2), dtype=complex)
    for a in range(n1):
        for b in range(n2):
            ph = np.exp(-2j * np.pi * (np.outer(i * a / n1, np.ones(n2)) + np.outer(np.ones(n1), j * b / n2)))
            out[a, b] = (x * ph).sum() / (n1 * n2)
    return out


def at(X, k1, k2):
    return X[k1 % X.shape[0], k2 % X.shape[1]]


class TestGridSpec:
    @pytest.mark.parametrize("shape", [(3, 4), (4, 5), (0, 4), (1, 1)])
    def test_rejects_odd_or_tiny(self, shape):
        with pytest.raises(ConfigurationError):
            GridSpec(*shape)

    def test_default_spacing_and_points(self):
        g = GridSpec(4, 6)
        assert g.spacing == (0.25, 1 / 6)
        s1, s2 = g.points()
        assert s1.shape == (4, 6)
        assert s1[1, 0] == 0.25 and s2[0, 1] == pytest.approx(1 / 6)

    def test_wavenumbers_principal_range(self):
        assert list(wavenumbers(4)) == [0, 1, 2, -1]


class TestDft:
    def test_constant_field(self):
        X = dft2(np.full((6, 4), 2.5))
        assert X[0, 0] == pytest.approx(2.5)
        X[0, 0] = 0
        assert np.abs(X).max() < 1e-15

    def test_single_cosine(self):
        n = 8
        x = np.cos(2 * np.pi * np.arange(n) / n)[:, None] * np.ones((1, n))
        X = dft2(x)
        assert at(X, 1, 0) == pytest.approx(0.5)
        assert at(X, -1, 0) == pytest.approx(0.5)
        X[1, 0] = X[-1, 0] = 0
        assert np.abs(X).max() < 1e-15

    def test_matches_direct_sum(self, rng):
        x = rng.standard_normal((10, 6))
        assert np.abs(dft2(x) - direct_dft(x)).max() < 1e-13

    def test_symmetry_of_random_field(self, rng):
        X = dft2(rng.standard_normal((20, 20)))
        assert symmetry_residual(X) < 1e-12
        for k1, k2 in [(1, 2), (3, -4), (0, 7), (-9, 5)]:
            assert abs(at(X, k1, k2)) == pytest.approx(abs(at(X, -k1, -k2)), abs=1e-15)
            assert np.angle(at(X, k1, k2)) == pytest.approx(-np.angle(at(X, -k1, -k2)), abs=1e-12)

    @pytest.mark.parametrize("n", [20, 80])
    def test_round_trip(self, rng, n):
        x = rng.standard_normal((n, n))
        assert np.abs(idft2(dft2(x)) - x).max() < 1e-10

    def test_parseval(self, rng):
        x = rng.standard_normal((12, 8))
        assert (np.abs(dft2(x)) ** 2).sum() == pytest.approx((x**2).mean(), rel=1e-9)

    def test_idft_zero_and_dc(self):
        assert np.all(idft2(np.zeros((4, 4))) == 0)
        X = np.zeros((4, 4), dtype=complex)
        X[0, 0] = 1.5
        assert np.allclose(idft2(X), 1.5)

    def test_idft_rejects_asymmetric(self):
        X = np.zeros((4, 4), dtype=complex)
        X[1, 0] = 1.0
        with pytest.raises(InvalidSpectrumError):
            idft2(X)

    def test_odd_field_rejected(self):
        with pytest.raises(ConfigurationError):
            dft2(np.zeros((3, 4)))

    @given(arrays(np.float64, (6, 4), elements=st.floats(-1e3, 1e3)))
    def test_round_trip_property(self, x):
        assert np.abs(idft2(dft2(x)) - x).max() <= 1e-10 * max(1.0, np.abs(x).max())


class TestWavenumberSets:
    def test_4x4_exhaustive(self):
        s = build_wavenumber_sets(GridSpec(4, 4), includes_highest=True)
        assert {tuple(k) for k in s.omega1} == {(0, 0), (0, 2), (2, 0), (2, 2)}
        assert len(s.omega2) == 6
        # every non-real lattice point appears once up to sign
        lattice = {(a, b) for a in wavenumbers(4) for b in wavenumbers(4)}
        covered = set()
        for k in s.omega2:
            for sign in (1, -1):
                covered.add((int((sign * k[0] + 1) % 4 - 1), int((sign * k[1] + 1) % 4 - 1)))
        real = {(0, 0), (0, 2), (2, 0), (2, 2)}
        assert covered == {(a if a != -2 else 2, b if b != -2 else 2) for a, b in lattice} - real

    @pytest.mark.parametrize("highest,expected", [(True, 6400), (False, 6241)])
    def test_80x80_dimensions(self, highest, expected):
        assert build_wavenumber_sets(GridSpec(80, 80), includes_highest=highest).dim == expected

    @pytest.mark.parametrize("n1", range(2, 66, 8))
    @pytest.mark.parametrize("n2", [2, 4, 10, 64])
    def test_dimension_identities(self, n1, n2):
        g = GridSpec(n1, n2)
        s16 = build_wavenumber_sets(g, includes_highest=True)
        s18 = build_wavenumber_sets(g)
        assert len(s16.omega1) + 2 * len(s16.omega2) == n1 * n2
        assert 1 + 2 * len(s18.omega3) == n1 * n2 - n1 - n2 + 1

    def test_no_conjugate_pairs(self):
        g = GridSpec(10, 8)
        s = build_wavenumber_sets(g, includes_highest=True)
        seen = {(k[0] % 10, k[1] % 8) for k in s.omega2}
        assert all(((-k[0]) % 10, (-k[1]) % 8) not in seen for k in s.omega2)

    def test_lexicographic_order(self):
        s = build_wavenumber_sets(GridSpec(8, 8))
        keys = [tuple(k) for k in s.pair_modes]
        assert keys == sorted(keys)

    def test_cutoff_20x20(self):
        assert build_wavenumber_sets(GridSpec(20, 20), cutoff=4).dim == 81
        assert build_wavenumber_sets(GridSpec(20, 20)).dim == 361


class TestPacking:
    def test_dc_only(self, sets8):
        X = np.zeros((8, 8), dtype=complex)
        X[0, 0] = 3.0
        v = pack(X, sets8)
        assert v[0] == 3.0 and np.all(v[1:] == 0)

    def test_single_mode_reconstructs_cosine(self, sets8):
        X = np.zeros((8, 8), dtype=complex)
        X[1, 0] = X[-1, 0] = 0.5
        v = pack(X, sets8)
        idx = [i for i, k in enumerate(sets8.coeff_modes) if tuple(k) == (1, 0)]
        assert v[idx[0]] == pytest.approx(0.5) and v[idx[1]] == 0
        s1, _ = sets8.grid.points()
        assert np.abs(reconstruct(v, sets8) - np.cos(2 * np.pi * s1)).max() < 1e-14

    def test_sign_convention(self, sets8):
        s1, s2 = sets8.grid.points()
        v = pack_field(np.sin(2 * np.pi * s2), sets8)
        i = [n for n, (k, kind) in enumerate(zip(sets8.coeff_modes, sets8.coeff_kind))
             if tuple(k) == (0, 1) and kind == "I"][0]
        # X(0,1) = -i/2, so alpha_I = -Im X = 1/2
        assert v[i] == pytest.approx(0.5)

    @pytest.mark.parametrize("highest", [True, False])
    def test_round_trip(self, rng, highest):
        s = build_wavenumber_sets(GridSpec(8, 6), includes_highest=highest)
        v = rng.standard_normal(s.dim)
        assert np.abs(pack(unpack(v, s), s) - v).max() < 1e-12

    def test_unpack_is_symmetric_with_real_omega1(self, rng):
        s = build_wavenumber_sets(GridSpec(6, 6), includes_highest=True)
        X = unpack(rng.standard_normal(s.dim), s)
        assert symmetry_residual(X) < 1e-15
        for k in s.omega1:
            assert at(X, *k).imag == 0

    def test_full_form_reconstructs_any_field(self, rng):
        s = build_wavenumber_sets(GridSpec(6, 8), includes_highest=True)
        x = rng.standard_normal((6, 8))
        assert np.abs(reconstruct(pack_field(x, s), s) - x).max() < 1e-12

    def test_pack_rejects_asymmetric(self, sets8):
        X = np.zeros((8, 8), dtype=complex)
        X[1, 1] = 1.0
        with pytest.raises(InvalidSpectrumError):
            pack(X, sets8)

    def test_basis_and_analysis_are_inverse(self):
        s = build_wavenumber_sets(GridSpec(6, 6))
        assert np.abs(analysis_matrix(s) @ basis_matrix(s) - np.eye(s.dim)).max() < 1e-13


class TestBasis:
    @pytest.mark.parametrize("s", [(0.0, 0.0), (0.3, 0.7), (0.9, 0.1)])
    def test_dc(self, s):
        assert evaluate_basis((0, 0), s, "R") == 1.0
        assert evaluate_basis((0, 0), s, "I") == 0.0

    def test_quarter_period(self):
        assert evaluate_basis((1, 0), (0.25, 0.0), "R") == pytest.approx(0.0, abs=1e-15)
        assert evaluate_basis((1, 0), (0.25, 0.0), "I") == pytest.approx(1.0)


class TestLowpass:
    def test_infinite_cutoff_is_identity(self, rng):
        x = rng.standard_normal((8, 8))
        assert np.abs(lowpass(x, math.inf) - x).max() < 1e-13
        assert np.abs(lowpass(x, math.pi * 8) - x).max() < 1e-13

    def test_zero_cutoff_keeps_mean(self, rng):
        x = rng.standard_normal((8, 8))
        assert np.allclose(lowpass(x, 0.0), x.mean())

    def test_30_rad_keeps_four(self):
        assert lattice_cutoff(30.0) == 4
        assert lattice_cutoff(2 * math.pi * 4) == 4

    def test_80x80_retained_modes(self, rng):
        X = dft2(lowpass(rng.standard_normal((80, 80)), 30.0))
        k = np.abs(wavenumbers(80))
        kept = np.abs(X) > 1e-14
        assert np.all(k[:, None][kept.any(axis=1)] <= 4)
        assert kept[4, 4] and not kept[5, 0]

    def test_idempotent_and_commutes_with_pack(self, rng, sets8):
        x = rng.standard_normal((8, 8))
        once = lowpass(x, 15.0)
        assert np.abs(lowpass(once, 15.0) - once).max() < 1e-14
        assert np.abs(pack_field(once, sets8) - lowpass(pack_field(x, sets8), 15.0, sets8)).max() < 1e-14

    def test_negative_cutoff(self):
        with pytest.raises(ValueError):
            lowpass(np.zeros((4, 4)), -1.0)
