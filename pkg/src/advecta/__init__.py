"""Spectral advection-diffusion modelling: Galerkin generators, Kalman filtering and fitting."""

__version__ = "0.1.0"

from .dstm import (
    DstmModel,
    KalmanBelief,
    ObservationSequence,
    filter_sequence,
    log_likelihood,
    nowcast,
    predict,
    source_sink_map,
    update,
)
from .errors import (
    AdvectaError,
    ConfigurationError,
    DataValidationError,
    InvalidSpectrumError,
    NumericError,
)
from .estimate import EstimationProblem, Params, fit, profile_likelihood
from .fields import PhysicalFieldSet, VelocityFieldModel
from .galerkin import (
    NoiseSpec,
    TransitionGenerator,
    alpha_cov,
    assemble_G,
    assemble_G_bruteforce,
    ide_step,
    matrix_exponential,
    mode_energy,
    process_noise_cov,
    total_energy,
)
from .simulate import SimConfig, SourceSink, make_vortex_velocity, simulate, vortex_benchmark
from .spectral import (
    GridSpec,
    WavenumberSets,
    build_wavenumber_sets,
    dft2,
    idft2,
    lowpass,
    pack,
    reconstruct,
    unpack,
)

__all__ = [
    "AdvectaError",
    "ConfigurationError",
    "DataValidationError",
    "DstmModel",
    "EstimationProblem",
    "GridSpec",
    "InvalidSpectrumError",
    "KalmanBelief",
    "NoiseSpec",
    "NumericError",
    "ObservationSequence",
    "Params",
    "PhysicalFieldSet",
    "SimConfig",
    "SourceSink",
    "TransitionGenerator",
    "VelocityFieldModel",
    "WavenumberSets",
    "alpha_cov",
    "assemble_G",
    "assemble_G_bruteforce",
    "build_wavenumber_sets",
    "dft2",
    "filter_sequence",
    "fit",
    "ide_step",
    "idft2",
    "log_likelihood",
    "lowpass",
    "make_vortex_velocity",
    "matrix_exponential",
    "mode_energy",
    "nowcast",
    "pack",
    "predict",
    "process_noise_cov",
    "profile_likelihood",
    "reconstruct",
    "simulate",
    "source_sink_map",
    "total_energy",
    "unpack",
    "update",
    "vortex_benchmark",
]
