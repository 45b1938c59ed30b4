import numpy as np
import pytest

from advecta.dstm import DstmModel, filter_sequence
from advecta.errors import ConfigurationError
from advecta.fields import PhysicalFieldSet
from advecta.galerkin import NoiseSpec, alpha_cov, assemble_G, matrix_exponential, stationary_cov
from advecta.simulate import (
    SimConfig,
    SourceSink,
    cov_sqrt,
    curl,
    divergence,
    empirical_covariance,
    empirical_covariance_se,
    euler_maruyama,
    make_vortex_velocity,
    simulate,
    simulate_paths,
    simulate_replicates,
    smooth_random_field,
    vortex_benchmark,
)
from advecta.spectral import GridSpec, build_wavenumber_sets, pack_field


def fourier_eval(a, sets, s1, s2):
    """Evaluate the packed series at arbitrary points."""
    out = np.zeros_like(s1)
    for k, c in zip(sets.real_modes, a[:sets.n_real]):
        out += c * np.cos(2 * np.pi * (k[0] * s1 + k[1] * s2))
    rs = a[sets.n_real:sets.n_real + sets.n_pair]
    im = a[sets.n_real + sets.n_pair:]
    for k, r, i in zip(sets.pair_modes, rs, im):
        ph = 2 * np.pi * (k[0] * s1 + k[1] * s2)
        out += 2 * (r * np.cos(ph) + i * np.sin(ph))
    return out


def quiet_config(grid, fields, init, steps=5, dt=1.0):
    sets = build_wavenumber_sets(grid)
    return SimConfig(grid, steps, dt, fields, NoiseSpec.isotropic(sets, 0.0), init=init, sets=sets)


class TestSimulate:
    def test_static(self):
        g = GridSpec(8, 8)
        init = smooth_random_field(g, band=2, seed=1)
        res = simulate(quiet_config(g, PhysicalFieldSet.build(g), init))
        assert np.abs(res.observations.frames - init).max() < 1e-12

    def test_constant_advection_translates(self):
        g = GridSpec(16, 16)
        v = np.array([0.13, -0.07])
        init = smooth_random_field(g, band=3, seed=4)
        res = simulate(quiet_config(g, PhysicalFieldSet.build(g, velocity=v), init, steps=6, dt=0.7))
        sets = build_wavenumber_sets(g)
        a0 = pack_field(init, sets)
        s1, s2 = g.points()
        for t, frame in zip(res.observations.times, res.observations.frames):
            shifted = fourier_eval(a0, sets, s1 - v[0] * t, s2 - v[1] * t)
            assert np.abs(frame - shifted).max() < 1e-8

    def test_determinism(self):
        cfg = vortex_benchmark(tau_obs=0.1, seed=5)
        a, b = simulate(cfg), simulate(cfg)
        assert np.array_equal(a.observations.frames, b.observations.frames)
        assert np.array_equal(a.alpha, b.alpha)
        c = simulate(vortex_benchmark(tau_obs=0.1, seed=6))
        assert not np.array_equal(a.observations.frames, c.observations.frames)

    def test_replicates_are_independent_and_reproducible(self):
        cfg = vortex_benchmark(grid=GridSpec(8, 8), t_steps=3)
        r1, r2 = simulate_replicates(cfg, 3), simulate_replicates(cfg, 3)
        for a, b in zip(r1, r2):
            assert np.array_equal(a.alpha, b.alpha)
        assert not np.array_equal(r1[0].alpha, r1[1].alpha)

    def test_shapes(self):
        cfg = vortex_benchmark()
        res = simulate(cfg)
        assert res.observations.frames.shape == (11, 20, 20)
        assert res.alpha.shape == res.beta.shape == (11, 361)
        assert np.allclose(res.observations.times, np.arange(11))

    def test_fixed_source_adds_linear_growth(self):
        g = GridSpec(8, 8)
        sets = build_wavenumber_sets(g)
        q = smooth_random_field(g, band=2, seed=2)
        cfg = SimConfig(g, 4, 0.5, PhysicalFieldSet.build(g), NoiseSpec.isotropic(sets, 0.0),
                        SourceSink("fixed", q), init=np.zeros(g.shape), sets=sets)
        res = simulate(cfg)
        for t, f in zip(res.observations.times, res.observations.frames):
            assert np.abs(f - t * q).max() < 1e-12

    def test_ar1_source(self):
        cfg = vortex_benchmark(grid=GridSpec(8, 8), t_steps=400)
        cfg.source_sink = SourceSink("ar1", rho=0.8, tau_beta=0.3)
        beta = simulate(cfg).beta
        lag1 = np.mean(beta[1:] * beta[:-1]) / np.mean(beta**2)
        assert lag1 == pytest.approx(0.8, abs=0.03)
        assert np.var(beta) == pytest.approx(0.3**2 / (1 - 0.8**2), rel=0.1)

    @pytest.mark.parametrize("mode", ["bogus", "fixed"])
    def test_bad_source(self, mode):
        with pytest.raises(ConfigurationError):
            SourceSink(mode)

    def test_innovations_are_calibrated(self):
        tau = 0.2
        cfg = vortex_benchmark(init_std=0, tau_obs=tau, seed=11)
        cfg.source_sink = SourceSink("ar1", rho=0.8, tau_beta=0.1)
        res = simulate(cfg)
        noise = NoiseSpec(cfg.noise.h, np.full(cfg.sets.dim, tau**2))
        model = DstmModel(res.generator, 1.0, 0.8, 0.1, noise, tau)
        z = filter_sequence(res.observations, model).whitened
        assert z.size >= 1000
        assert 0.8 <= z.var() <= 1.2


class TestVortex:
    grid = GridSpec(20, 20)

    def test_speed_bound(self):
        v = make_vortex_velocity(self.grid)
        assert np.sqrt((v**2).sum(-1)).max() <= 0.19

    def test_divergence_free(self):
        assert np.abs(divergence(make_vortex_velocity(self.grid))).max() < 1e-6

    def test_curl_peak_in_southeast(self):
        v = make_vortex_velocity(self.grid)
        c = curl(v)
        i, j = np.unravel_index(c.argmax(), c.shape)
        s1, s2 = self.grid.points()
        assert s1[i, j] > 0.5 and s2[i, j] < 0.5
        d = np.sqrt(((s1 - 0.75 + 0.5) % 1 - 0.5) ** 2 + ((s2 - 0.3 + 0.5) % 1 - 0.5) ** 2)
        assert c.max() >= 3 * np.abs(c[d > 0.2]).max()

    def test_drift_too_large(self):
        with pytest.raises(ConfigurationError):
            make_vortex_velocity(self.grid, drift=(0.19, 0.0))


class TestEmpiricalCovariance:
    def test_identical_paths(self):
        X = np.tile(np.arange(12.0).reshape(1, 4, 3), (5, 1, 1))
        assert np.all(empirical_covariance(X, 1, 2) == 0)

    def test_needs_two_paths(self):
        with pytest.raises(ValueError):
            empirical_covariance(np.zeros((1, 3, 2)), 0, 0)

    def test_zero_generator(self):
        X = simulate_paths(np.zeros((3, 3)), NoiseSpec(np.zeros(3), np.ones(3)), 1.0, 2, 10000, seed=1)
        C, se = empirical_covariance(X, 1, 1), empirical_covariance_se(X, 1, 1)
        assert np.mean(np.abs(C - np.eye(3)) <= 3 * se) >= 0.9

    def test_matches_alpha_cov(self, rng):
        K = 4
        G = rng.standard_normal((K, K)) * 0.2 - 0.5 * np.eye(K)
        noise = NoiseSpec(rng.random(K) + 0.2, rng.random(K) + 0.5)
        X = simulate_paths(G, noise, 1.0, 6, 5000, seed=2)
        C, se = empirical_covariance(X, 1, 5), empirical_covariance_se(X, 1, 5)
        ok = np.abs(C - alpha_cov(G, noise, 5.0, 1.0)) <= 3 * se
        assert ok.mean() >= 0.9


class TestMisc:
    def test_stationary_limit_approached(self):
        g = GridSpec(6, 6)
        sets = build_wavenumber_sets(g)
        f = PhysicalFieldSet.build(g, velocity=make_vortex_velocity(g), diffusivity=0.01, decay=0.5)
        Gm = assemble_G(f, sets)
        noise = NoiseSpec.isotropic(sets, 0.1, 2.0)
        P = stationary_cov(Gm, noise)
        dist = [np.linalg.norm(alpha_cov(Gm, noise, t, 0.0) - P) for t in (0.0, 1.0, 2.0, 4.0, 8.0)]
        assert np.all(np.diff(dist) < 0)

    def test_euler_maruyama_agrees_with_exponential(self, rng):
        G = rng.standard_normal((5, 5)) * 0.3
        a0 = rng.standard_normal(5)
        exact = matrix_exponential(G, 0.5) @ a0
        assert np.abs(euler_maruyama(G, a0, 0.5, substeps=2000) - exact).max() < 1e-3

    def test_cov_sqrt(self, rng):
        A = rng.standard_normal((4, 4))
        C = A @ A.T
        L = cov_sqrt(C)
        assert np.allclose(L @ L.T, C)
        with pytest.raises(ConfigurationError):
            cov_sqrt(-np.eye(2))
