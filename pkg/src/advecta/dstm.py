"""Augmented spectral state-space model, Kalman filter, likelihood and nowcasting.

The state is ``theta = (alpha, beta)`` of length ``2K``: spectral
coefficients of the field and of the source-sink term. One step is

    alpha(t) = exp(G dt) alpha(t-dt) + dt beta(t-dt) + W_alpha
    beta(t)  = rho beta(t-dt) + W_beta

and the data are the packed spectra ``Y(t) = alpha(t) + V`` with
``V ~ N(0, tau_obs^2 I)``. ``tau_obs`` and ``tau_beta`` are standard
deviations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, DataValidationError, NumericError
from .galerkin import NoiseSpec, TransitionGenerator, matrix_exponential, process_noise_cov
from .spectral import GridSpec, WavenumberSets, basis_matrix, pack_field, reconstruct

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class DstmModel:
    generator: TransitionGenerator
    delta_t: float
    rho: float
    tau_beta: float
    noise: NoiseSpec
    tau_obs: float
    transition: np.ndarray = field(init=False, repr=False)
    g_tilde: np.ndarray = field(init=False, repr=False)
    sigma_w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ConfigurationError("delta_t must be positive")
        if self.tau_beta < 0 or self.tau_obs < 0:
            raise ConfigurationError("tau_beta and tau_obs must be non-negative")
        if abs(self.rho) > 1:
            raise ConfigurationError("|rho| must not exceed 1")
        K = self.generator.dim
        if self.noise.h.shape != (K,):
            raise ConfigurationError(f"noise spec has length {self.noise.h.size}, expected {K}")
        E = matrix_exponential(self.generator, self.delta_t)
        self.transition = E
        gt = np.zeros((2 * K, 2 * K))
        gt[:K, :K] = E
        gt[:K, K:] = self.delta_t * np.eye(K)
        gt[K:, K:] = self.rho * np.eye(K)
        self.g_tilde = gt
        sw = np.zeros((2 * K, 2 * K))
        sw[:K, :K] = process_noise_cov(self.generator, self.noise, self.delta_t)
        sw[K:, K:] = self.tau_beta**2 * np.eye(K)
        self.sigma_w = sw

    @property
    def K(self) -> int:
        return self.generator.dim

    @property
    def sets(self) -> WavenumberSets:
        return self.generator.sets


@dataclass
class KalmanBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (n, n):
            raise ConfigurationError("belief mean/cov shapes are inconsistent")


def initial_belief(first_obs, model: DstmModel) -> KalmanBelief:
    """``m0 = (Y(t0), 0)``, ``Q0 = blockdiag(H0, tau_beta^2 I)``."""
    K = model.K
    m = np.concatenate([np.asarray(first_obs, dtype=float), np.zeros(K)])
    Q = np.zeros((2 * K, 2 * K))
    Q[:K, :K] = np.diag(model.noise.h0)
    Q[K:, K:] = model.tau_beta**2 * np.eye(K)
    return KalmanBelief(m, Q)


@dataclass
class ObservationSequence:
    """Frames on one grid at uniformly spaced times."""

    frames: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.frames.ndim != 3:
            raise DataValidationError("frames must be a (T, n1, n2) array")
        if len(self.times) != len(self.frames):
            raise DataValidationError("one time stamp per frame is required")
        GridSpec.from_shape(self.frames.shape[1:])
        if len(self.times) > 1:
            dt = np.diff(self.times)
            if not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12) or dt[0] <= 0:
                raise DataValidationError("frame times must be increasing and uniformly spaced")

    @property
    def grid(self) -> GridSpec:
        return GridSpec.from_shape(self.frames.shape[1:])

    @property
    def delta_t(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else float("nan")

    def spectral(self, sets: WavenumberSets) -> np.ndarray:
        """``(T, K)`` packed spectra of every frame."""
        if sets.grid.shape != self.grid.shape:
            raise DataValidationError(
                f"data grid {self.grid.shape} does not match model grid {sets.grid.shape}"
            )
        return np.stack([pack_field(f, sets) for f in self.frames])


def predict(belief: KalmanBelief, model: DstmModel) -> KalmanBelief:
    """``m <- G~ m``, ``Q <- G~ Q G~' + Sigma_W``, using the block form of ``G~``."""
    K, E, dt, rho = model.K, model.transition, model.delta_t, model.rho
    m, Q = belief.mean, belief.cov
    ma, mb = m[:K], m[K:]
    Qaa, Qab, Qbb = Q[:K, :K], Q[:K, K:], Q[K:, K:]
    # top block row of G~ Q
    top_a = E @ Qaa + dt * Qab.T
    top_b = E @ Qab + dt * Qbb
    out = np.empty_like(Q)
    out[:K, :K] = top_a @ E.T + dt * top_b + model.sigma_w[:K, :K]
    out[:K, K:] = rho * top_b
    out[K:, :K] = rho * top_b.T
    out[K:, K:] = rho * rho * Qbb + model.sigma_w[K:, K:]
    out = 0.5 * (out + out.T)
    mean = np.concatenate([E @ ma + dt * mb, rho * mb])
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(out))):
        raise NumericError("prediction produced non-finite values")
    return KalmanBelief(mean, out)


def _innovation(belief, obs, model):
    K = model.K
    y = np.asarray(obs, dtype=float)
    if y.shape != (K,):
        raise DataValidationError(f"observation has length {y.shape}, expected {K}")
    e = y - belief.mean[:K]
    S = belief.cov[:K, :K] + model.tau_obs**2 * np.eye(K)
    try:
        chol = scipy.linalg.cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        eig = np.linalg.eigvalsh(0.5 * (S + S.T))
        raise NumericError(
            f"innovation covariance is not positive definite (min eigenvalue {eig.min():.3e}, "
            f"tau_obs={model.tau_obs})"
        ) from exc
    return e, S, chol


def _update_with(belief, e, chol, model):
    K = model.K
    Q = belief.cov
    gain = scipy.linalg.cho_solve(chol, Q[:K, :]).T  # Q[:, :K] S^-1
    m = belief.mean + gain @ e
    # Joseph form (I - L F) Q (I - L F)' + tau^2 L L' with F = (I, 0)
    A = Q - gain @ Q[:K, :]
    Qn = A - (Q[:, :K] - gain @ Q[:K, :K]) @ gain.T + model.tau_obs**2 * (gain @ gain.T)
    return KalmanBelief(m, 0.5 * (Qn + Qn.T))


def update(belief: KalmanBelief, obs, model: DstmModel) -> KalmanBelief:
    """Condition on a packed spectral observation of the first ``K`` state components."""
    e, _, chol = _innovation(belief, obs, model)
    return _update_with(belief, e, chol, model)


@dataclass
class FilterResult:
    predicted: list
    filtered: list
    innovations: np.ndarray
    whitened: np.ndarray
    loglik_terms: np.ndarray

    @property
    def loglik(self) -> float:
        return float(self.loglik_terms.sum())


def _as_spectral(obs, model):
    if isinstance(obs, ObservationSequence):
        if len(obs.times) > 1 and not math.isclose(obs.delta_t, model.delta_t, rel_tol=1e-9):
            raise DataValidationError(
                f"data spacing {obs.delta_t} does not match model delta_t {model.delta_t}"
            )
        return obs.spectral(model.sets)
    Y = np.asarray(obs, dtype=float)
    if Y.ndim != 2 or Y.shape[1] != model.K:
        raise DataValidationError(f"spectral observations must be (T, {model.K})")
    return Y


def filter_sequence(obs, model: DstmModel, init: KalmanBelief | None = None,
                    keep_beliefs: bool = True) -> FilterResult:
    """Alternate predict/update over the sequence.

    Without ``init`` the first observation seeds :func:`initial_belief` and
    filtering runs over the rest.
    """
    Y = _as_spectral(obs, model)
    if init is None:
        init, Y = initial_belief(Y[0], model), Y[1:]
    belief = init
    predicted, filtered, innov, white, terms = [], [], [], [], []
    K = model.K
    for y in Y:
        belief = predict(belief, model)
        e, S, chol = _innovation(belief, y, model)
        L = np.tril(chol[0])
        z = scipy.linalg.solve_triangular(L, e, lower=True)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        terms.append(-0.5 * (logdet + z @ z + K * LOG_2PI))
        innov.append(e)
        white.append(z)
        if keep_beliefs:
            predicted.append(belief)
        belief = _update_with(belief, e, chol, model)
        if keep_beliefs:
            filtered.append(belief)
    if not keep_beliefs:
        filtered.append(belief)
    empty = np.zeros((0, K))
    return FilterResult(
        predicted,
        filtered,
        np.array(innov) if innov else empty,
        np.array(white) if white else empty,
        np.array(terms),
    )


def log_likelihood(obs, model: DstmModel, init: KalmanBelief | None = None) -> float:
    """Sum of one-step-ahead Gaussian log densities of the packed observations."""
    ll = filter_sequence(obs, model, init, keep_beliefs=False).loglik
    if not math.isfinite(ll):
        raise NumericError("log-likelihood is not finite")
    return ll


def field_variance(cov_alpha, sets: WavenumberSets, B=None) -> np.ndarray:
    """Pointwise variance ``diag(B C B')`` of the reconstructed field."""
    B = basis_matrix(sets) if B is None else B
    return np.einsum("ij,jk,ik->i", B, cov_alpha, B).reshape(sets.grid.shape)


def nowcast(belief: KalmanBelief, model: DstmModel, horizon_steps: int):
    """Repeated prediction; returns ``[(mean_field, variance_field), ...]`` for ``h = 1..horizon``."""
    if int(horizon_steps) != horizon_steps or horizon_steps < 1:
        raise ConfigurationError("horizon must be a positive integer")
    K, sets = model.K, model.sets
    B = basis_matrix(sets)
    out = []
    for _ in range(int(horizon_steps)):
        belief = predict(belief, model)
        mean = reconstruct(belief.mean[:K], sets)
        out.append((mean, field_variance(belief.cov[:K, :K], sets, B)))
    return out


def source_sink_map(belief: KalmanBelief, model: DstmModel) -> np.ndarray:
    """Reconstruct the source-sink field from the ``beta`` block."""
    K = model.K
    return reconstruct(belief.mean[K:], model.sets)
