"""Maximum-likelihood fitting in two stages.

Stage 1 low-passes the data, assembles ``G`` on the reduced wavenumber set
and optimizes the velocity mixture and decay (by default together with the
noise groups, which are cheap at that size). Stage 2 fixes the physical
fields and optimizes the noise and source-sink parameters on the full
representation. Both stages use Nelder-Mead with restarts in an
unconstrained, transformed parameter space.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.optimize

from .dstm import DstmModel, FilterResult, ObservationSequence, filter_sequence, log_likelihood
from .errors import ConfigurationError, DataValidationError, NumericError
from .fields import DecayModel, PhysicalFieldSet, VelocityFieldModel
from .galerkin import NoiseSpec, assemble_G
from .spectral import WavenumberSets, build_wavenumber_sets, lattice_cutoff

BENCHMARK_CENTERS = np.array([[0.225, 0.225], [0.725, 0.725], [0.225, 0.725], [0.725, 0.225]])

PHYSICAL_GROUPS = ("velocity", "decay", "diffusivity")
NOISE_GROUPS = ("rho", "tau_beta", "noise", "tau_obs")
# one free density per packed mode; full representation only, so stage 2 only
MODE_GROUPS = ("noise_modes",)


@dataclass
class Params:
    """Natural-scale parameters of the full model.

    ``decay`` is a scalar, or ``3J`` mixture coefficients sharing the velocity
    kernels. Forcing densities follow ``noise_a (1 + |2 pi k|^2)^(-noise_b)``
    unless ``noise_h`` holds one density per packed mode of the full set.
    """

    gamma_x: np.ndarray
    gamma_y: np.ndarray
    decay: float | np.ndarray = 0.5
    diffusivity: float = 0.0
    rho: float = 0.5
    tau_beta: float = 0.1
    noise_a: float = 0.05
    noise_b: float = 0.0
    tau_obs: float = 0.05
    noise_h: np.ndarray | None = None

    def __post_init__(self):
        self.gamma_x = np.asarray(self.gamma_x, dtype=float).ravel()
        self.gamma_y = np.asarray(self.gamma_y, dtype=float).ravel()
        if np.ndim(self.decay):
            self.decay = np.asarray(self.decay, dtype=float).ravel()
        if self.noise_h is not None:
            self.noise_h = np.asarray(self.noise_h, dtype=float).ravel()

    def copy(self) -> "Params":
        return replace(self, gamma_x=self.gamma_x.copy(), gamma_y=self.gamma_y.copy(),
                       decay=np.copy(self.decay) if np.ndim(self.decay) else self.decay,
                       noise_h=None if self.noise_h is None else self.noise_h.copy())

    def as_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if v is not None:
                out[k] = np.asarray(v).tolist() if np.ndim(v) else float(v)
        return out


def _log(x):
    return math.log(max(x, 1e-300))


# group -> (attribute, to unconstrained, back to natural scale)
_SCALAR_TRANSFORMS = {
    "diffusivity": ("diffusivity", _log, math.exp),
    "rho": ("rho", lambda r: 2.0 * math.atanh(max(min(r, 1 - 1e-12), -1 + 1e-12)),
            lambda u: math.tanh(0.5 * u)),
    "tau_beta": ("tau_beta", _log, math.exp),
    "tau_obs": ("tau_obs", _log, math.exp),
}


def to_unconstrained(p: Params, groups) -> np.ndarray:
    out = []
    for g in groups:
        if g == "velocity":
            out += [p.gamma_x, p.gamma_y]
        elif g == "decay":
            out.append(np.atleast_1d(p.decay))
        elif g == "noise":
            out.append(np.array([_log(p.noise_a), p.noise_b]))
        elif g == "noise_modes":
            if p.noise_h is None:
                raise ConfigurationError("noise_modes needs per-mode starting densities")
            out.append(np.log(np.maximum(p.noise_h, 1e-300)))
        elif g in _SCALAR_TRANSFORMS:
            attr, fwd, _ = _SCALAR_TRANSFORMS[g]
            out.append(np.array([fwd(getattr(p, attr))]))
        else:
            raise ConfigurationError(f"unknown parameter group {g!r}")
    return np.concatenate(out) if out else np.zeros(0)


def from_unconstrained(u, base: Params, groups) -> Params:
    p = base.copy()
    u = np.asarray(u, dtype=float)
    i = 0
    for g in groups:
        if g == "velocity":
            n = p.gamma_x.size
            p.gamma_x, p.gamma_y = u[i:i + n].copy(), u[i + n:i + 2 * n].copy()
            i += 2 * n
        elif g == "decay":
            n = np.size(p.decay)
            p.decay = u[i:i + n].copy() if np.ndim(p.decay) else float(u[i])
            i += n
        elif g == "noise":
            p.noise_a, p.noise_b = math.exp(u[i]), float(u[i + 1])
            i += 2
        elif g == "noise_modes":
            n = p.noise_h.size
            p.noise_h = np.exp(u[i:i + n])
            i += n
        else:
            attr, _, inv = _SCALAR_TRANSFORMS[g]
            setattr(p, attr, inv(float(u[i])))
            i += 1
    if i != u.size:
        raise ConfigurationError("parameter vector length does not match the free groups")
    return p


@dataclass
class OptimizerSettings:
    maxiter: int = 500
    restarts: int = 3
    rel_tol: float = 1e-6
    initial_step: float = 1.0


@dataclass
class EstimationProblem:
    data: ObservationSequence
    centers: np.ndarray = field(default_factory=lambda: BENCHMARK_CENTERS.copy())
    v_max: float = 0.19
    bandwidth: float | None = None
    init: Params | None = None
    free: tuple = ("velocity", "decay", "rho", "tau_beta", "noise", "tau_obs")
    lowpass_cutoff_step1: float = 2.0 * math.pi * 4
    step1: OptimizerSettings = field(default_factory=OptimizerSettings)
    step2: OptimizerSettings = field(default_factory=OptimizerSettings)
    quadrature: str = "mesh"
    # also free the noise groups in stage 1, so a poor noise guess cannot bias the fields
    step1_nuisance: bool = True

    def __post_init__(self):
        if len(self.data.frames) < 3:
            raise DataValidationError("fitting needs at least 3 frames")
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        J = len(self.centers)
        if self.init is None:
            self.init = Params(np.zeros(3 * J), np.zeros(3 * J))
        if self.init.gamma_x.size != 3 * J or self.init.gamma_y.size != 3 * J:
            raise ConfigurationError("initial gamma does not match the number of kernels")
        unknown = set(self.free) - set(PHYSICAL_GROUPS + NOISE_GROUPS + MODE_GROUPS)
        if unknown:
            raise ConfigurationError(f"unknown parameter groups {sorted(unknown)}")

    @property
    def delta_t(self) -> float:
        return self.data.delta_t

    def velocity_model(self, p: Params) -> VelocityFieldModel:
        return VelocityFieldModel(self.centers, p.gamma_x, p.gamma_y, self.v_max, self.bandwidth)

    def physical_fields(self, p: Params) -> PhysicalFieldSet:
        grid = self.data.grid
        if np.ndim(p.decay):
            decay = DecayModel("mixture", centers=self.centers, gamma=p.decay,
                               bandwidth=self.velocity_model(p).bandwidth)
        else:
            decay = float(p.decay)
        return PhysicalFieldSet.build(grid, velocity=self.velocity_model(p),
                                      diffusivity=p.diffusivity, decay=decay)

    def sets(self, cutoff: float | None = None) -> WavenumberSets:
        c = None if cutoff is None else lattice_cutoff(cutoff)
        return build_wavenumber_sets(self.data.grid, cutoff=c)

    def model(self, p: Params, sets: WavenumberSets, generator=None) -> DstmModel:
        G = generator if generator is not None else assemble_G(self.physical_fields(p), sets,
                                                               self.quadrature)
        # alpha(0) is centred on the first frame, so its spread is the observation error
        if p.noise_h is not None and p.noise_h.size == sets.dim:
            h = p.noise_h
        else:
            h = NoiseSpec.power_law(sets, p.noise_a, p.noise_b).h
        noise = NoiseSpec(h, h + p.tau_obs**2)
        return DstmModel(G, self.delta_t, p.rho, p.tau_beta, noise, p.tau_obs)


@dataclass
class StageResult:
    params: Params
    loglik: float
    initial_loglik: float
    nfev: int
    converged: bool
    trace: list
    failed_evaluations: int = 0


@dataclass
class FitResult:
    params: Params
    model: DstmModel
    loglik: float
    step1: StageResult
    step2: StageResult
    filter: FilterResult
    warnings: list
    wall_clock: float


def _nelder_mead(objective, u0, settings: OptimizerSettings):
    """Minimize with restarts; returns (best u, best f, nfev, converged)."""
    best_u, best_f = np.asarray(u0, dtype=float), objective(u0)
    nfev, converged = 1, False
    n = best_u.size
    if n == 0:
        return best_u, best_f, nfev, True
    for _ in range(settings.restarts):
        simplex = np.vstack([best_u, best_u + settings.initial_step * np.eye(n)])
        res = scipy.optimize.minimize(
            objective, best_u, method="Nelder-Mead",
            options={
                "maxiter": settings.maxiter,
                "initial_simplex": simplex,
                "xatol": 1e-8,
                "fatol": settings.rel_tol * max(abs(best_f), 1.0),
            },
        )
        nfev += res.nfev
        improved = best_f - res.fun
        if res.fun < best_f:
            best_u, best_f = res.x, res.fun
        converged = bool(res.success)
        if converged and improved <= settings.rel_tol * max(abs(best_f), 1.0):
            break
    return best_u, best_f, nfev, converged


def _run_stage(problem, groups, base: Params, evaluate, settings) -> StageResult:
    trace, failures = [], [0]

    def objective(u):
        p = from_unconstrained(u, base, groups)
        try:
            ll = evaluate(p)
        except NumericError:
            failures[0] += 1
            return 1e300
        if not math.isfinite(ll):
            failures[0] += 1
            return 1e300
        trace.append(ll)
        return -ll

    u0 = to_unconstrained(base, groups)
    try:
        ll0 = evaluate(base)
    except NumericError as exc:
        raise NumericError(f"log-likelihood failed at the starting point: {exc}",
                           snapshot=base.as_dict()) from exc
    if not math.isfinite(ll0):
        raise NumericError("log-likelihood is not finite at the starting point", snapshot=base.as_dict())
    u, f, nfev, converged = _nelder_mead(objective, u0, settings)
    p = from_unconstrained(u, base, groups)
    ll = -f if f < 1e300 else ll0
    if ll < ll0:
        p, ll = base.copy(), ll0
    return StageResult(p, ll, ll0, nfev, converged, trace, failures[0])


def stage1_loglik(problem: EstimationProblem, p: Params, sets: WavenumberSets | None = None) -> float:
    sets = sets or problem.sets(problem.lowpass_cutoff_step1)
    return log_likelihood(problem.data, problem.model(p, sets))


def fit(problem: EstimationProblem) -> FitResult:
    """Two-stage maximum likelihood; reports both stage optima and the final filter run."""
    t0 = time.perf_counter()
    notes = []
    sets1 = problem.sets(problem.lowpass_cutoff_step1)
    g1 = [g for g in PHYSICAL_GROUPS if g in problem.free]
    if problem.step1_nuisance:
        g1 += [g for g in NOISE_GROUPS if g in problem.free]
    s1 = _run_stage(problem, g1, problem.init, lambda p: stage1_loglik(problem, p, sets1),
                    problem.step1)
    if not s1.converged:
        notes.append("step 1 stopped at the iteration limit")

    sets2 = problem.sets(None)
    G = assemble_G(problem.physical_fields(s1.params), sets2, problem.quadrature)
    g2 = [g for g in NOISE_GROUPS if g in problem.free]
    base2 = s1.params
    if "noise_modes" in problem.free:
        # per-mode densities replace the power law, seeded from its stage-1 values
        g2 = [g for g in g2 if g != "noise"] + ["noise_modes"]
        base2 = s1.params.copy()
        if base2.noise_h is None or base2.noise_h.size != sets2.dim:
            base2.noise_h = NoiseSpec.power_law(sets2, base2.noise_a, base2.noise_b).h
    s2 = _run_stage(problem, g2, base2,
                    lambda p: log_likelihood(problem.data, problem.model(p, sets2, G)),
                    problem.step2)
    if not s2.converged:
        notes.append("step 2 stopped at the iteration limit")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)

    model = problem.model(s2.params, sets2, G)
    filt = filter_sequence(problem.data, model)
    return FitResult(s2.params, model, filt.loglik, s1, s2, filt, notes, time.perf_counter() - t0)


def profile_likelihood(problem: EstimationProblem, group: str, values, params: Params | None = None,
                       cutoff: float | None = None) -> np.ndarray:
    """Log-likelihood along one scalar parameter with everything else held at ``params``.

    ``group`` is ``rho``, ``tau_beta``, ``tau_obs``, ``noise_a``, ``noise_b``,
    ``diffusivity``, ``decay`` (scalar decay) or ``velocity_scale`` (multiplies
    both gamma vectors).
    """
    base = (params or problem.init).copy()
    sets = problem.sets(cutoff)
    reuse_G = group not in ("velocity_scale", "decay", "diffusivity")
    G = assemble_G(problem.physical_fields(base), sets, problem.quadrature) if reuse_G else None
    out = []
    for v in values:
        p = base.copy()
        if group == "velocity_scale":
            p.gamma_x, p.gamma_y = base.gamma_x * v, base.gamma_y * v
        elif group in ("rho", "tau_beta", "tau_obs", "noise_a", "noise_b", "diffusivity", "decay"):
            setattr(p, group, float(v))
        else:
            raise ConfigurationError(f"cannot profile over {group!r}")
        out.append(log_likelihood(problem.data, problem.model(p, sets, G)))
    return np.array(out)


def fit_gamma_to_velocity(velocity, problem_or_centers, v_max: float, bandwidth=None, grid=None):
    """Least-squares ``gamma`` reproducing a gridded velocity through ``v_max tanh(X gamma)``."""
    centers = getattr(problem_or_centers, "centers", problem_or_centers)
    v = np.asarray(velocity, dtype=float)
    from .spectral import GridSpec

    grid = grid or GridSpec.from_shape(v.shape[:2])
    model = VelocityFieldModel.zeros(centers, v_max, bandwidth)
    X = model.design(grid)
    target = np.arctanh(np.clip(v / v_max, -0.999, 0.999)).reshape(-1, 2)
    gx = np.linalg.lstsq(X, target[:, 0], rcond=None)[0]
    gy = np.linalg.lstsq(X, target[:, 1], rcond=None)[0]
    return gx, gy
