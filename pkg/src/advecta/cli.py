"""``advecta`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data validation error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
import warnings
from importlib import resources
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .config import (
    RunConfig,
    build_dstm_params,
    build_estimation_problem,
    build_fields,
    build_grid,
    build_noise,
    build_sets,
    build_sim_config,
    fitted_config_text,
    load_config,
)
from .dstm import DstmModel, ObservationSequence, filter_sequence, nowcast, source_sink_map
from .errors import AdvectaError, ConfigurationError, DataValidationError
from .estimate import fit
from .galerkin import NoiseSpec, assemble_G
from .io import (
    atomic_write,
    encode_pgm,
    format_filter_output,
    format_truth,
    quiver_svg,
    read_frames,
    to_gray,
    write_frames,
)
from .simulate import simulate

log = logging.getLogger("advecta")


def bundled_config(name: str = "vortex20.cfg") -> Path:
    return Path(str(resources.files("advecta") / "data" / name))


def _sha(path: Path) -> str:
    import hashlib

    return hashlib.sha256(path.read_bytes()).hexdigest()


def _manifest(out: Path, command: str, cfg: RunConfig | None, args, outputs, extra=None) -> Path:
    doc = {
        "command": command,
        "version": __version__,
        "config": cfg.source if cfg else None,
        "config_sha256": cfg.sha256 if cfg else None,
        "data": str(args.data) if getattr(args, "data", None) else None,
        "seed": getattr(args, "seed", None),
        "threads": args.threads,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "outputs": {p.name: _sha(p) for p in outputs},
    }
    if extra:
        doc.update(extra)
    return atomic_write(out / "manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_data(args, grid=None) -> ObservationSequence:
    if not args.data:
        raise ConfigurationError("--data is required for this command")
    frames, times = read_frames(args.data)
    data = ObservationSequence(frames, times)
    if grid is not None and data.grid.shape != grid.shape:
        raise DataValidationError(f"data grid {data.grid.shape} does not match config grid {grid.shape}")
    return data


def _require_config(args) -> RunConfig:
    if not args.config:
        raise ConfigurationError("--config is required for this command")
    path = Path(args.config)
    if not path.exists() and bundled_config(path.name).exists():
        path = bundled_config(path.name)
    return load_config(path)


def _model_from_config(cfg: RunConfig, delta_t: float) -> DstmModel:
    grid = build_grid(cfg)
    sets = build_sets(cfg, grid)
    fields = build_fields(cfg, grid)
    p = build_dstm_params(cfg)
    noise = build_noise(cfg, sets)
    if cfg.section("noise").get("h0") is None:
        # alpha(0) is centred on the first frame: add the observation error
        noise = NoiseSpec(noise.h, noise.h + p["tau_obs"] ** 2)
    G = assemble_G(fields, sets)
    return DstmModel(G, delta_t, p["rho"], p["tau_beta"], noise, p["tau_obs"])


# -- commands -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _require_config(args)
    sim = build_sim_config(cfg, args.seed)
    res = simulate(sim)
    out = Path(args.out)
    obs = res.observations
    files = [
        write_frames(out / "frames.txt", obs.frames, obs.times),
        atomic_write(out / "truth.txt", format_truth(obs.times, res.alpha, res.beta, sim.sets)),
    ]
    _manifest(out, "simulate", cfg, args, files, {"seed": sim.seed})
    log.info("wrote %d frames of %dx%d to %s", len(obs.times), *sim.grid.shape, out)
    return 0


def _report(items: dict) -> str:
    lines = []
    for k, v in items.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(repr(float(x)) for x in np.ravel(v))
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def cmd_fit(args) -> int:
    cfg = _require_config(args)
    data = _load_data(args, build_grid(cfg))
    problem = build_estimation_problem(cfg, data)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        res = fit(problem)
    out = Path(args.out)
    p = res.params
    items = {
        "loglik": repr(res.loglik),
        "step1_loglik": repr(res.step1.loglik),
        "step1_initial_loglik": repr(res.step1.initial_loglik),
        "step1_nfev": res.step1.nfev,
        "step1_converged": res.step1.converged,
        "step2_loglik": repr(res.step2.loglik),
        "step2_initial_loglik": repr(res.step2.initial_loglik),
        "step2_nfev": res.step2.nfev,
        "step2_converged": res.step2.converged,
        "warnings": "; ".join(res.warnings) or "none",
        "wall_clock_s": f"{res.wall_clock:.3f}",
        "transform.velocity": "identity (speed = v_max tanh)",
        "transform.decay": "identity",
        "transform.rho": "tanh(u/2)",
        "transform.tau_beta": "exp",
        "transform.tau_obs": "exp",
        "transform.noise": "a = exp(u), b identity",
    }
    for k, v in p.as_dict().items():
        items[f"param.{k}"] = v if isinstance(v, list) else repr(v)
    items["trace.step1"] = res.step1.trace
    items["trace.step2"] = res.step2.trace
    report = _report(items) + "\n# config replay\n" + "".join("# " + ln + "\n" for ln in cfg.text.splitlines())
    files = [
        atomic_write(out / "fit_report.txt", report),
        atomic_write(out / "fitted.yaml", fitted_config_text(cfg, problem, p)),
    ]
    _manifest(out, "fit", cfg, args, files)
    log.info("fit loglik %.6g (step 1 %.6g)", res.loglik, res.step1.loglik)
    return 0


def cmd_filter(args) -> int:
    cfg = _require_config(args)
    data = _load_data(args, build_grid(cfg))
    model = _model_from_config(cfg, data.delta_t)
    res = filter_sequence(data, model)
    z = res.whitened.ravel()
    calib = float(z.var()) if z.size else float("nan")
    out = Path(args.out)
    files = [
        atomic_write(out / "filter.txt",
                     format_filter_output(data.times[1:], res.filtered, with_cov=args.cov)),
        atomic_write(out / "filter_report.txt", _report({
            "loglik": repr(res.loglik),
            "steps": len(res.filtered),
            "innovation_samples": z.size,
            "innovation_variance": repr(calib),
            "calibrated": 0.8 <= calib <= 1.2,
        })),
    ]
    if res.filtered:
        files.append(write_frames(out / "source_sink.txt",
                                  [source_sink_map(res.filtered[-1], model)], data.times[-1:]))
    _manifest(out, "filter", cfg, args, files)
    log.info("innovation variance %.3f", calib)
    return 0


def cmd_nowcast(args) -> int:
    cfg = _require_config(args)
    if args.steps is None or args.steps < 1:
        raise DataValidationError("--steps must be a positive integer")
    data = _load_data(args, build_grid(cfg))
    model = _model_from_config(cfg, data.delta_t)
    res = filter_sequence(data, model, keep_beliefs=False)
    last = res.filtered[-1] if res.filtered else None
    if last is None:
        from .dstm import initial_belief

        last = initial_belief(data.spectral(model.sets)[0], model)
    out = Path(args.out)
    files = []
    t_last = data.times[-1]
    for h, (mean, var) in enumerate(nowcast(last, model, args.steps), start=1):
        t = t_last + h * model.delta_t
        files.append(write_frames(out / f"nowcast_mean_{h:03d}.txt", [mean], [t]))
        files.append(write_frames(out / f"nowcast_var_{h:03d}.txt", [var], [t]))
    _manifest(out, "nowcast", cfg, args, files, {"steps": args.steps})
    return 0


def cmd_plot(args) -> int:
    if not args.data:
        raise ConfigurationError("--data is required for plot")
    frames, times = read_frames(args.data)
    if len(frames) == 0:
        raise DataValidationError("no frames to plot")
    out = Path(args.out)
    files, scales = [], []
    for i, (f, t) in enumerate(zip(frames, times)):
        px, lo, hi = to_gray(f)
        files.append(atomic_write(out / f"frame_{i:03d}.pgm", encode_pgm(px)))
        scales.append({"file": files[-1].name, "t": float(t), "min": lo, "max": hi})
    cfg = None
    if args.subsample < 1:
        raise ConfigurationError("--subsample must be >= 1")
    if args.config:
        cfg = _require_config(args)
        grid = build_grid(cfg)
        fields = build_fields(cfg, grid)
        files.append(atomic_write(out / "velocity.svg",
                                  quiver_svg(fields.velocity, subsample=args.subsample)))
    _manifest(out, "plot", cfg, args, files, {"normalization": scales})
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "filter": cmd_filter,
    "nowcast": cmd_nowcast,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="advecta", description="Spectral advection-diffusion DSTM toolkit")
    p.add_argument("--version", action="version", version=f"advecta {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--data", help="frame sequence file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--steps", type=int, help="nowcast horizon in time steps")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, help="BLAS threads (default: $ADVECTA_THREADS)")
    p.add_argument("--cov", action="store_true", help="filter: also write covariances")
    p.add_argument("--subsample", type=int, default=1, help="plot: quiver subsampling")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _threads(args) -> int | None:
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        return args.threads
    env = os.environ.get("ADVECTA_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"ADVECTA_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigurationError("ADVECTA_THREADS must be >= 1")
        return n
    return None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="advecta: %(message)s")
    start = time.perf_counter()
    try:
        args.threads = _threads(args)
        with threadpool_limits(limits=args.threads):
            code = COMMANDS[args.command](args)
    except AdvectaError as exc:
        print(f"advecta: error: {exc}", file=sys.stderr)
        return exc.exit_code
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - start)
    return code


if __name__ == "__main__":
    sys.exit(main())
