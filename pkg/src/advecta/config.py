"""YAML run configuration.

Every command reads one file with optional sections::

    grid:        {n1: 20, n2: 20}
    time:        {steps: 10, delta_t: 1.0}
    seed:        0
    fields:
      velocity:    {kind: vortex, v_max: 0.19}      # or constant / mixture
      diffusivity: {mode: constant, value: 0.0025}  # or matrix: [[..], [..]]
      decay:       {mode: constant, value: 0.9}     # or mixture with centers/gamma
    noise:       {density: 0.05}                    # or {a: .., b: ..}; optional h0
    source_sink: {mode: fixed, center: [0.3, 0.7], width: 0.12, amplitude: 1.0}
    init:        {kind: smooth, std: 30, band: 4, seed: 2024}   # or {kind: prior}
    observation: {tau_obs: 0.0}
    dstm:        {rho: .., tau_beta: .., tau_obs: .., noise_a: .., noise_b: ..}
    estimation:  {centers: [[..]], v_max: 0.19, cutoff: 25.13, maxiter: 500, ...}

Errors name the offending key path and, when known, its line.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError
from .estimate import BENCHMARK_CENTERS, EstimationProblem, OptimizerSettings, Params
from .fields import DecayModel, PhysicalFieldSet, VelocityFieldModel
from .galerkin import NoiseSpec
from .simulate import SimConfig, SourceSink, bump_field, make_vortex_velocity, smooth_random_field
from .spectral import GridSpec, WavenumberSets, build_wavenumber_sets


def _line_map(node, path=(), out=None) -> dict:
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            _line_map(v, path + (str(k.value),), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, path + (str(i),), out)
    return out


class Section:
    """Read-only view of a mapping that knows its key path and source lines."""

    def __init__(self, data, path, lines, source):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{source}: '{'.'.join(path) or '<root>'}' must be a mapping")
        self.data, self.path, self.lines, self.source = data, tuple(path), lines, source

    def _where(self, key=None) -> str:
        p = self.path + ((key,) if key is not None else ())
        line = self.lines.get(p) or self.lines.get(self.path)
        dotted = ".".join(p) or "<root>"
        return f"{self.source}:{line}: '{dotted}'" if line else f"{self.source}: '{dotted}'"

    def error(self, key, msg) -> ConfigurationError:
        return ConfigurationError(f"{self._where(key)} {msg}")

    def __contains__(self, key):
        return key in self.data

    def section(self, key) -> "Section":
        return Section(self.data.get(key), self.path + (key,), self.lines, self.source)

    def require(self, key):
        if key not in self.data:
            raise ConfigurationError(f"{self._where()} is missing required field '{key}'")
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    def number(self, key, default=None, required=False, minimum=None, positive=False) -> float:
        if required:
            v = self.require(key)
        else:
            v = self.data.get(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.error(key, f"must be a number, got {v!r}")
        v = float(v)
        if not math.isfinite(v):
            raise self.error(key, "must be finite")
        if positive and v <= 0:
            raise self.error(key, "must be positive")
        if minimum is not None and v < minimum:
            raise self.error(key, f"must be >= {minimum}")
        return v

    def integer(self, key, default=None, required=False, minimum=None) -> int:
        v = self.require(key) if required else self.data.get(key, default)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise self.error(key, f"must be an integer, got {v!r}")
        if minimum is not None and v < minimum:
            raise self.error(key, f"must be >= {minimum}")
        return v

    def array(self, key, shape=None, default=None, required=False):
        v = self.require(key) if required else self.data.get(key, default)
        if v is None:
            return None
        try:
            a = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            raise self.error(key, "must be a numeric array") from None
        if shape is not None:
            ok = len(a.shape) == len(shape) and all(s is None or s == d for s, d in zip(shape, a.shape))
            if not ok:
                raise self.error(key, f"has shape {a.shape}, expected {shape}")
        return a

    def choice(self, key, options, default=None):
        v = self.data.get(key, default)
        if v not in options:
            raise self.error(key, f"must be one of {list(options)}, got {v!r}")
        return v


@dataclass
class RunConfig:
    root: Section
    text: str
    source: str

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def section(self, key) -> Section:
        return self.root.section(key)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark else source
        raise ConfigurationError(f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    lines = _line_map(node) if node is not None else {}
    return RunConfig(Section(data, (), lines, source), text, source)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))


# -- builders -------------------------------------------------------------------


def build_grid(cfg: RunConfig) -> GridSpec:
    g = cfg.section("grid")
    n1, n2 = g.integer("n1", required=True), g.integer("n2", required=True)
    try:
        return GridSpec(n1, n2)
    except ValueError as exc:
        raise g.error(None, str(exc)) from None


def build_sets(cfg: RunConfig, grid: GridSpec) -> WavenumberSets:
    g = cfg.section("grid")
    form = g.choice("form", (16, 18), 18)
    return build_wavenumber_sets(grid, includes_highest=(form == 16), cutoff=g.integer("cutoff"))


def _velocity(sec: Section, grid: GridSpec):
    kind = sec.choice("kind", ("vortex", "constant", "mixture", "zero"), "zero")
    if kind == "zero":
        return None
    if kind == "constant":
        return sec.array("value", (2,), required=True)
    if kind == "vortex":
        return make_vortex_velocity(grid, v_max=sec.number("v_max", 0.19, positive=True))
    centers = sec.array("centers", (None, 2), required=True)
    J = len(centers)
    try:
        return VelocityFieldModel(
            centers,
            sec.array("gamma_x", (3 * J,), required=True),
            sec.array("gamma_y", (3 * J,), required=True),
            sec.number("v_max", required=True, positive=True),
            sec.number("bandwidth", positive=True),
        )
    except ConfigurationError as exc:
        raise sec.error(None, str(exc)) from None


def _diffusivity(sec: Section):
    sec.choice("mode", ("constant",), "constant")
    if "matrix" in sec:
        return sec.array("matrix", (2, 2))
    return sec.number("value", 0.0, minimum=0.0)


def _decay(sec: Section):
    mode = sec.choice("mode", ("constant", "mixture"), "constant")
    if mode == "constant":
        return sec.number("value", 0.0)
    centers = sec.array("centers", (None, 2), required=True)
    return DecayModel("mixture", centers=centers,
                      gamma=sec.array("gamma", (3 * len(centers),), required=True),
                      bandwidth=sec.number("bandwidth", positive=True))


def build_fields(cfg: RunConfig, grid: GridSpec) -> PhysicalFieldSet:
    f = cfg.section("fields")
    try:
        return PhysicalFieldSet.build(
            grid,
            velocity=_velocity(f.section("velocity"), grid),
            diffusivity=_diffusivity(f.section("diffusivity")),
            decay=_decay(f.section("decay")),
        )
    except ConfigurationError as exc:
        if str(exc).startswith(cfg.source):
            raise
        raise f.error(None, str(exc)) from None


def build_noise(cfg: RunConfig, sets: WavenumberSets) -> NoiseSpec:
    n = cfg.section("noise")
    h0 = n.number("h0", minimum=0.0)
    if "h" in n:
        h = n.array("h", shape=(sets.dim,))
        if np.any(h < 0):
            raise n.error("h", "densities must be >= 0")
        return NoiseSpec(h, h if h0 is None else np.full(sets.dim, h0))
    if "a" in n or "b" in n:
        return NoiseSpec.power_law(sets, n.number("a", required=True, minimum=0.0),
                                   n.number("b", 0.0), h0)
    d = n.number("density", required=True, minimum=0.0)
    return NoiseSpec.isotropic(sets, d, h0)


def build_source_sink(cfg: RunConfig, grid: GridSpec) -> SourceSink:
    s = cfg.section("source_sink")
    mode = s.choice("mode", ("none", "fixed", "ar1"), "none")
    if mode == "fixed":
        q = bump_field(grid, center=tuple(s.array("center", (2,), default=[0.3, 0.7])),
                       width=s.number("width", 0.12, positive=True),
                       amplitude=s.number("amplitude", 1.0), band=s.integer("band", 5, minimum=0))
        return SourceSink("fixed", q)
    if mode == "ar1":
        rho = s.number("rho", required=True)
        if abs(rho) > 1:
            raise s.error("rho", "must satisfy |rho| <= 1")
        return SourceSink("ar1", rho=rho, tau_beta=s.number("tau_beta", required=True, minimum=0.0))
    return SourceSink()


def build_init(cfg: RunConfig, grid: GridSpec, seed: int):
    s = cfg.section("init")
    kind = s.choice("kind", ("prior", "smooth"), "prior")
    if kind == "prior":
        return None
    return smooth_random_field(grid, s.integer("band", 4, minimum=0), s.number("std", 1.0, minimum=0.0),
                               s.integer("seed", seed))


def config_seed(cfg: RunConfig, override: int | None = None) -> int:
    if override is not None:
        return override
    v = cfg.root.integer("seed", 0, minimum=0)
    return v


def build_sim_config(cfg: RunConfig, seed: int | None = None) -> SimConfig:
    grid = build_grid(cfg)
    sets = build_sets(cfg, grid)
    t = cfg.section("time")
    seed = config_seed(cfg, seed)
    obs = cfg.section("observation")
    return SimConfig(
        grid=grid,
        t_steps=t.integer("steps", required=True, minimum=0),
        delta_t=t.number("delta_t", 1.0, positive=True),
        fields=build_fields(cfg, grid),
        noise=build_noise(cfg, sets),
        source_sink=build_source_sink(cfg, grid),
        init=build_init(cfg, grid, seed),
        tau_obs=obs.number("tau_obs", 0.0, minimum=0.0),
        seed=seed,
        sets=sets,
    )


def build_dstm_params(cfg: RunConfig) -> dict:
    """Noise and source-sink parameters for ``filter`` and ``nowcast``."""
    d = cfg.section("dstm")
    rho = d.number("rho", required=True)
    if abs(rho) > 1:
        raise d.error("rho", "must satisfy |rho| <= 1")
    return {
        "rho": rho,
        "tau_beta": d.number("tau_beta", required=True, minimum=0.0),
        "tau_obs": d.number("tau_obs", required=True, minimum=0.0),
    }


def build_estimation_problem(cfg: RunConfig, data) -> EstimationProblem:
    e = cfg.section("estimation")
    centers = e.array("centers", (None, 2), default=BENCHMARK_CENTERS)
    J = len(centers)
    i = e.section("init")
    decay = i.get("decay", 0.5)
    init = Params(
        i.array("gamma_x", (3 * J,), default=np.zeros(3 * J)),
        i.array("gamma_y", (3 * J,), default=np.zeros(3 * J)),
        decay=np.asarray(decay, dtype=float) if isinstance(decay, list) else i.number("decay", 0.5),
        diffusivity=i.number("diffusivity", 0.0, minimum=0.0),
        rho=i.number("rho", 0.5),
        tau_beta=i.number("tau_beta", 0.1, positive=True),
        noise_a=i.number("noise_a", 0.05, positive=True),
        noise_b=i.number("noise_b", 0.0),
        tau_obs=i.number("tau_obs", 0.05, positive=True),
    )
    free = e.get("free", ["velocity", "decay", "rho", "tau_beta", "noise", "tau_obs"])
    if not isinstance(free, list):
        raise e.error("free", "must be a list of parameter groups")

    def opt(prefix):
        return OptimizerSettings(
            maxiter=e.integer(f"{prefix}maxiter", e.integer("maxiter", 500, minimum=1), minimum=1),
            restarts=e.integer("restarts", 3, minimum=1),
            rel_tol=e.number("rel_tol", 1e-6, positive=True),
            initial_step=e.number("initial_step", 1.0, positive=True),
        )

    try:
        return EstimationProblem(
            data,
            centers=centers,
            v_max=e.number("v_max", 0.19, positive=True),
            bandwidth=e.number("bandwidth", positive=True),
            init=init,
            free=tuple(free),
            lowpass_cutoff_step1=e.number("cutoff", 2 * math.pi * 4, positive=True),
            step1=opt("step1_"),
            step2=opt("step2_"),
            quadrature=e.choice("quadrature", ("mesh", "exact"), "mesh"),
            step1_nuisance=bool(e.get("step1_nuisance", True)),
        )
    except ConfigurationError as exc:
        raise e.error(None, str(exc)) from None


def fitted_config_text(cfg: RunConfig, problem: EstimationProblem, params: Params) -> str:
    """A config with the fitted velocity, decay and noise, ready for ``filter``/``nowcast``."""
    data = dict(cfg.root.data)
    fields = dict(data.get("fields") or {})
    fields["velocity"] = {
        "kind": "mixture",
        "centers": np.asarray(problem.centers).tolist(),
        "v_max": float(problem.v_max),
        "bandwidth": float(problem.velocity_model(params).bandwidth),
        "gamma_x": params.gamma_x.tolist(),
        "gamma_y": params.gamma_y.tolist(),
    }
    if np.ndim(params.decay):
        fields["decay"] = {"mode": "mixture", "centers": np.asarray(problem.centers).tolist(),
                           "gamma": np.asarray(params.decay).tolist()}
    else:
        fields["decay"] = {"mode": "constant", "value": float(params.decay)}
    fields["diffusivity"] = {"mode": "constant", "value": float(params.diffusivity)}
    data["fields"] = fields
    data["noise"] = {"a": float(params.noise_a), "b": float(params.noise_b)}
    if params.noise_h is not None:
        data["noise"]["h"] = params.noise_h.tolist()
    data["dstm"] = {"rho": float(params.rho), "tau_beta": float(params.tau_beta),
                    "tau_obs": float(params.tau_obs)}
    return yaml.safe_dump(data, sort_keys=False)
