"""Synthetic trajectories from the exact discrete-time spectral recursion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dstm import ObservationSequence
from .errors import ConfigurationError
from .fields import PhysicalFieldSet, _wrap
from .galerkin import (
    NoiseSpec,
    TransitionGenerator,
    _as_matrix,
    _diag_of,
    assemble_G,
    matrix_exponential,
    process_noise_cov,
)
from .spectral import (
    GridSpec,
    WavenumberSets,
    build_wavenumber_sets,
    dft2,
    lattice_cutoff,
    pack_field,
    reconstruct,
    wavenumbers,
)


@dataclass
class SourceSink:
    """Either a fixed field ``Q(s)`` or an AR(1) spectral process ``beta``."""

    mode: str = "none"
    field: np.ndarray | None = None
    rho: float = 0.0
    tau_beta: float = 0.0

    def __post_init__(self):
        if self.mode not in ("none", "fixed", "ar1"):
            raise ConfigurationError(f"unknown source_sink mode {self.mode!r}")
        if self.mode == "fixed":
            if self.field is None:
                raise ConfigurationError("fixed source_sink needs a field")
            self.field = np.asarray(self.field, dtype=float)
        if abs(self.rho) > 1 or self.tau_beta < 0:
            raise ConfigurationError("source_sink needs |rho| <= 1 and tau_beta >= 0")


@dataclass
class SimConfig:
    grid: GridSpec
    t_steps: int
    delta_t: float
    fields: PhysicalFieldSet
    noise: NoiseSpec
    source_sink: SourceSink = field(default_factory=SourceSink)
    init: np.ndarray | None = None
    tau_obs: float = 0.0
    seed: int = 0
    sets: WavenumberSets | None = None

    def __post_init__(self):
        if self.t_steps < 0 or not self.delta_t > 0:
            raise ConfigurationError("t_steps must be >= 0 and delta_t > 0")
        if self.fields.grid.shape != self.grid.shape:
            raise ConfigurationError("physical fields do not match the grid")
        if self.sets is None:
            self.sets = build_wavenumber_sets(self.grid)
        if self.noise.h.shape != (self.sets.dim,):
            raise ConfigurationError(
                f"noise spec has length {self.noise.h.size}, expected {self.sets.dim}"
            )
        if self.tau_obs < 0:
            raise ConfigurationError("tau_obs must be non-negative")


@dataclass
class SimulationResult:
    observations: ObservationSequence
    alpha: np.ndarray
    beta: np.ndarray
    generator: TransitionGenerator


def cov_sqrt(C) -> np.ndarray:
    """Symmetric square root via eigendecomposition, clipping tiny negative eigenvalues."""
    C = 0.5 * (np.asarray(C, dtype=float) + np.asarray(C, dtype=float).T)
    w, V = np.linalg.eigh(C)
    floor = -1e-10 * max(np.trace(C), 0.0)
    if w.size and w.min() < floor - 1e-300:
        raise ConfigurationError(f"covariance is indefinite (min eigenvalue {w.min():.3e})")
    return V * np.sqrt(np.clip(w, 0.0, None))


def simulate(config: SimConfig, generator: TransitionGenerator | None = None) -> SimulationResult:
    """Draw one trajectory ``alpha(0..T)``, ``beta(0..T)`` and noisy frames."""
    sets = config.sets
    K = sets.dim
    G = generator if generator is not None else assemble_G(config.fields, sets)
    dt = config.delta_t
    E = matrix_exponential(G, dt)
    Lw = cov_sqrt(process_noise_cov(G, config.noise, dt))
    rng = np.random.default_rng(config.seed)

    if config.init is not None:
        a = pack_field(config.init, sets)
    else:
        a = np.sqrt(config.noise.h0) * rng.standard_normal(K)
    ss = config.source_sink
    if ss.mode == "fixed":
        b = pack_field(ss.field, sets)
    elif ss.mode == "ar1":
        b = ss.tau_beta * rng.standard_normal(K)
    else:
        b = np.zeros(K)

    alphas, betas = [a], [b]
    for _ in range(config.t_steps):
        a = E @ a + dt * b + Lw @ rng.standard_normal(K)
        if ss.mode == "ar1":
            b = ss.rho * b + ss.tau_beta * rng.standard_normal(K)
        alphas.append(a)
        betas.append(b)
    alpha = np.array(alphas)
    beta = np.array(betas)
    Y = alpha + config.tau_obs * rng.standard_normal(alpha.shape)
    frames = np.stack([reconstruct(y, sets) for y in Y])
    times = dt * np.arange(config.t_steps + 1)
    return SimulationResult(ObservationSequence(frames, times), alpha, beta, G)


def simulate_replicates(config: SimConfig, n: int) -> list[SimulationResult]:
    """``n`` independent runs; replicate ``i`` uses a stream spawned from ``(seed, i)``."""
    G = assemble_G(config.fields, config.sets)
    out = []
    for i in range(n):
        seed = np.random.SeedSequence([config.seed, i])
        cfg = SimConfig(**{**config.__dict__, "seed": seed})
        out.append(simulate(cfg, G))
    return out


def simulate_paths(G, noise: NoiseSpec, delta_t: float, n_steps: int, n_paths: int,
                   seed=0) -> np.ndarray:
    """``(n_paths, n_steps + 1, K)`` zero-mean paths with ``alpha(0) ~ N(0, H0)``."""
    g = _as_matrix(G)
    K = g.shape[0]
    rng = np.random.default_rng(seed)
    E = matrix_exponential(g, delta_t)
    Lw = cov_sqrt(process_noise_cov(g, noise, delta_t))
    a = rng.standard_normal((n_paths, K)) * np.sqrt(_diag_of(noise, "h0"))
    out = np.empty((n_paths, n_steps + 1, K))
    out[:, 0] = a
    for t in range(1, n_steps + 1):
        a = a @ E.T + rng.standard_normal((n_paths, K)) @ Lw.T
        out[:, t] = a
    return out


def empirical_covariance(trajectories, lag: int, t: int) -> np.ndarray:
    """Unbiased sample ``cov(alpha(t + lag), alpha(t))`` across paths (indices are steps)."""
    X = np.asarray(trajectories, dtype=float)
    if X.ndim != 3 or X.shape[0] < 2:
        raise ValueError("need at least 2 paths shaped (n_paths, T, K)")
    a = X[:, t + lag] - X[:, t + lag].mean(axis=0)
    b = X[:, t] - X[:, t].mean(axis=0)
    return a.T @ b / (X.shape[0] - 1)


def empirical_covariance_se(trajectories, lag: int, t: int) -> np.ndarray:
    """Standard error of each entry of :func:`empirical_covariance`."""
    X = np.asarray(trajectories, dtype=float)
    n = X.shape[0]
    a = X[:, t + lag] - X[:, t + lag].mean(axis=0)
    b = X[:, t] - X[:, t].mean(axis=0)
    prod = a[:, :, None] * b[:, None, :]
    return prod.std(axis=0, ddof=1) / np.sqrt(n)


def euler_maruyama(G, alpha0, delta_t: float, substeps: int = 100, beta=None,
                   h=None, rng=None) -> np.ndarray:
    """One step of ``d alpha = (G alpha + beta) dt + dW`` by Euler-Maruyama; cross-check only."""
    g = _as_matrix(G)
    a = np.array(alpha0, dtype=float)
    b = np.zeros_like(a) if beta is None else np.asarray(beta, dtype=float)
    dt = delta_t / substeps
    for _ in range(substeps):
        a = a + dt * (g @ a + b)
        if h is not None:
            a = a + np.sqrt(np.asarray(h) * dt) * rng.standard_normal(a.shape)
    return a


# -- benchmark fields -------------------------------------------------------

VORTEX_CENTER = (0.75, 0.3)


def _spectral_gradient(field):
    """Exact derivative of the trigonometric interpolant (Nyquist row dropped)."""
    n1, n2 = field.shape
    X = dft2(field)
    k1 = wavenumbers(n1).astype(float)
    k2 = wavenumbers(n2).astype(float)
    k1[np.abs(k1) == n1 // 2] = 0.0
    k2[np.abs(k2) == n2 // 2] = 0.0
    d1 = np.real(np.fft.ifft2(2j * np.pi * k1[:, None] * X)) * X.size
    d2 = np.real(np.fft.ifft2(2j * np.pi * k2[None, :] * X)) * X.size
    return d1, d2


def make_vortex_velocity(grid: GridSpec, v_max: float = 0.19, center=VORTEX_CENTER,
                         width: float = 0.1, drift=(0.06, 0.03), band: int = 5,
                         fill: float = 0.95) -> np.ndarray:
    """Counter-clockwise vortex from a band-limited Gaussian streamfunction, plus a uniform drift.

    ``v = (d psi/d s2, -d psi/d s1) * amp + drift``. The amplitude is chosen so the
    peak speed equals ``fill * v_max``; the field is divergence-free by construction.
    """
    s1, s2 = grid.points()
    d1, d2 = _wrap(s1 - center[0]), _wrap(s2 - center[1])
    psi = np.exp(-(d1**2 + d2**2) / (2.0 * width**2))
    P = dft2(psi)
    keep = (np.abs(wavenumbers(grid.n1))[:, None] <= band) & (np.abs(wavenumbers(grid.n2))[None, :] <= band)
    psi = np.real(np.fft.ifft2(np.where(keep, P, 0.0))) * P.size
    g1, g2 = _spectral_gradient(psi)
    # curl = -lap(psi) > 0 at the bump: counter-clockwise
    u = np.stack([g2, -g1], axis=-1)
    drift = np.asarray(drift, dtype=float)
    target = fill * v_max
    if np.linalg.norm(drift) >= target:
        raise ConfigurationError("drift alone exceeds the speed budget")

    def peak(amp):
        return np.sqrt(((amp * u + drift) ** 2).sum(-1)).max()

    lo, hi = 0.0, 1.0
    while peak(hi) < target:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if peak(mid) < target else (lo, mid)
    return lo * u + drift


def curl(velocity, grid: GridSpec | None = None) -> np.ndarray:
    """Central-difference ``d v2/d s1 - d v1/d s2`` with periodic wraparound."""
    v = np.asarray(velocity, dtype=float)
    n1, n2 = v.shape[:2]
    dv2 = (np.roll(v[..., 1], -1, 0) - np.roll(v[..., 1], 1, 0)) * n1 / 2.0
    dv1 = (np.roll(v[..., 0], -1, 1) - np.roll(v[..., 0], 1, 1)) * n2 / 2.0
    return dv2 - dv1


def divergence(velocity) -> np.ndarray:
    """Spectral divergence of the trigonometric interpolant."""
    v = np.asarray(velocity, dtype=float)
    d1, _ = _spectral_gradient(v[..., 0])
    _, d2 = _spectral_gradient(v[..., 1])
    return d1 + d2


def bump_field(grid: GridSpec, center=(0.3, 0.7), width: float = 0.12, amplitude: float = 1.0,
               band: int | None = None) -> np.ndarray:
    """Periodic Gaussian bump, optionally truncated to lattice wavenumbers ``<= band``."""
    s1, s2 = grid.points()
    d1, d2 = _wrap(s1 - center[0]), _wrap(s2 - center[1])
    f = amplitude * np.exp(-(d1**2 + d2**2) / (2.0 * width**2))
    if band is not None:
        X = dft2(f)
        keep = (np.abs(wavenumbers(grid.n1))[:, None] <= band) & (np.abs(wavenumbers(grid.n2))[None, :] <= band)
        f = np.real(np.fft.ifft2(np.where(keep, X, 0.0))) * X.size
    return f


def smooth_random_field(grid: GridSpec, band: int = 4, std: float = 1.0, seed=0) -> np.ndarray:
    """White noise truncated to lattice wavenumbers ``<= band`` and scaled to a given std."""
    x = np.random.default_rng(seed).standard_normal(grid.shape)
    X = dft2(x)
    keep = (np.abs(wavenumbers(grid.n1))[:, None] <= band) & (np.abs(wavenumbers(grid.n2))[None, :] <= band)
    f = np.real(np.fft.ifft2(np.where(keep, X, 0.0))) * X.size
    return std * f / f.std()


def vortex_benchmark(grid: GridSpec | None = None, t_steps: int = 10, delta_t: float = 1.0,
                     diffusivity: float | None = None, decay: float = 0.9, noise_density: float = 0.05,
                     source_amplitude: float = 1.0, init_std: float = 30.0, init_seed: int = 2024,
                     tau_obs: float = 0.0, seed: int = 0) -> SimConfig:
    """The 20x20 vortex configuration.

    ``diffusivity`` defaults to one squared grid cell, i.e. the identity in
    grid-cell units. The initial frame is a fixed smooth field whose
    amplitude dominates the forcing noise, so its transport is visible.
    """
    grid = grid or GridSpec(20, 20)
    if diffusivity is None:
        diffusivity = 1.0 / (grid.n1 * grid.n2)
    v = make_vortex_velocity(grid)
    fields = PhysicalFieldSet.build(grid, velocity=v, diffusivity=diffusivity, decay=decay)
    sets = build_wavenumber_sets(grid)
    q = bump_field(grid, amplitude=source_amplitude, band=lattice_cutoff(2 * np.pi * 5))
    return SimConfig(
        grid=grid,
        t_steps=t_steps,
        delta_t=delta_t,
        fields=fields,
        noise=NoiseSpec.isotropic(sets, noise_density),
        source_sink=SourceSink("fixed", q),
        init=smooth_random_field(grid, 4, init_std, init_seed) if init_std > 0 else None,
        tau_obs=tau_obs,
        seed=seed,
        sets=sets,
    )
