"""Velocity, diffusivity and decay fields on the grid.

Velocity is stored as ``(n1, n2, 2)`` with component 0 along ``s1`` (x) and
component 1 along ``s2`` (y). Diffusivity is ``(n1, n2, 2, 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .spectral import GridSpec


def _wrap(d):
    """Periodic offset in ``[-0.5, 0.5)``."""
    return (np.asarray(d) + 0.5) % 1.0 - 0.5


@dataclass
class VelocityFieldModel:
    """Locally weighted mixture of affine regressions, squashed by ``tanh``.

    Each kernel ``j`` is an isotropic Gaussian bump at ``centers[j]`` with a
    shared ``bandwidth``; its local regressors are ``(1, d1, d2)`` where ``d``
    is the periodic offset from the kernel center. ``gamma_x`` and
    ``gamma_y`` hold ``J * 3`` coefficients each, kernel by kernel.
    """

    centers: np.ndarray
    gamma_x: np.ndarray
    gamma_y: np.ndarray
    v_max: float
    bandwidth: float | None = None

    n_basis = 3

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if self.centers.shape[1] != 2:
            raise ConfigurationError("kernel centers must be 2D points")
        J = len(self.centers)
        self.gamma_x = np.asarray(self.gamma_x, dtype=float).ravel()
        self.gamma_y = np.asarray(self.gamma_y, dtype=float).ravel()
        for name in ("gamma_x", "gamma_y"):
            if getattr(self, name).size != J * self.n_basis:
                raise ConfigurationError(
                    f"{name} has {getattr(self, name).size} entries, expected {J * self.n_basis}"
                )
        if not self.v_max > 0:
            raise ConfigurationError("v_max must be positive")
        if self.bandwidth is None:
            self.bandwidth = default_bandwidth(self.centers)
        if not self.bandwidth > 0:
            raise ConfigurationError("kernel bandwidth must be positive")

    @property
    def n_kernels(self) -> int:
        return len(self.centers)

    @classmethod
    def zeros(cls, centers, v_max, bandwidth=None):
        J = len(np.atleast_2d(centers))
        return cls(centers, np.zeros(3 * J), np.zeros(3 * J), v_max, bandwidth)

    def with_gamma(self, gamma_x, gamma_y):
        return VelocityFieldModel(self.centers, gamma_x, gamma_y, self.v_max, self.bandwidth)

    def design(self, grid: GridSpec) -> np.ndarray:
        return kernel_design(self.centers, self.bandwidth, grid)


def kernel_design(centers, bandwidth, grid: GridSpec) -> np.ndarray:
    """``(n1*n2, 3J)`` matrix ``(diag(pi_1) B_1, ..., diag(pi_J) B_J)``."""
    s1, s2 = grid.points()
    s1, s2 = s1.ravel(), s2.ravel()
    blocks = []
    for c in np.atleast_2d(centers):
        d1, d2 = _wrap(s1 - c[0]), _wrap(s2 - c[1])
        w = np.exp(-(d1**2 + d2**2) / (2.0 * bandwidth**2))
        blocks.append(w[:, None] * np.stack([np.ones_like(d1), d1, d2], axis=1))
    return np.concatenate(blocks, axis=1)


def default_bandwidth(centers) -> float:
    """Half the smallest periodic distance between distinct kernel centers."""
    c = np.atleast_2d(centers)
    if len(c) < 2:
        return 0.25
    d = _wrap(c[:, None, :] - c[None, :, :])
    dist = np.sqrt((d**2).sum(-1))
    dist = dist[~np.eye(len(c), dtype=bool)]
    dist = dist[dist > 0]
    return 0.5 * float(dist.min()) if dist.size else 0.25


def eval_velocity(model: VelocityFieldModel, grid: GridSpec) -> np.ndarray:
    X = model.design(grid)
    vx = model.v_max * np.tanh(X @ model.gamma_x)
    vy = model.v_max * np.tanh(X @ model.gamma_y)
    return np.stack([vx, vy], axis=-1).reshape(grid.n1, grid.n2, 2)


@dataclass
class DecayModel:
    """Constant decay, or an untransformed kernel mixture sharing the velocity layout."""

    mode: str = "constant"
    value: float = 0.0
    centers: np.ndarray | None = None
    gamma: np.ndarray | None = None
    bandwidth: float | None = None

    def __post_init__(self):
        if self.mode not in ("constant", "mixture"):
            raise ConfigurationError(f"unknown decay mode {self.mode!r}")
        if self.mode == "mixture":
            if self.centers is None or self.gamma is None:
                raise ConfigurationError("mixture decay needs centers and gamma")
            self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
            self.gamma = np.asarray(self.gamma, dtype=float).ravel()
            if self.gamma.size != 3 * len(self.centers):
                raise ConfigurationError("decay gamma length must be 3 * J")
            if self.bandwidth is None:
                self.bandwidth = default_bandwidth(self.centers)


def eval_decay(params: DecayModel | float, grid: GridSpec) -> np.ndarray:
    if not isinstance(params, DecayModel):
        params = DecayModel("constant", float(params))
    if params.mode == "constant":
        return np.full(grid.shape, float(params.value))
    X = kernel_design(params.centers, params.bandwidth, grid)
    return (X @ params.gamma).reshape(grid.shape)


def _check_psd(m, what="diffusivity"):
    m = np.asarray(m, dtype=float)
    if not np.allclose(m, np.swapaxes(m, -1, -2), atol=1e-12):
        raise ConfigurationError(f"{what} must be symmetric")
    eig = np.linalg.eigvalsh(m)
    if np.any(eig < -1e-12):
        raise ConfigurationError(f"{what} must be positive semidefinite")
    return m


def constant_diffusivity(d, grid: GridSpec):
    """Diffusivity field equal to ``d`` everywhere, and its (zero) divergence."""
    d = np.asarray(d, dtype=float)
    if d.ndim == 0:
        d = d * np.eye(2)
    if d.shape != (2, 2):
        raise ConfigurationError(f"diffusivity must be a scalar or 2x2 matrix, got {d.shape}")
    d = _check_psd(d)
    D = np.broadcast_to(d, grid.shape + (2, 2)).copy()
    return D, np.zeros(grid.shape + (2,))


def numeric_divergence(D, grid: GridSpec | None = None) -> np.ndarray:
    """Central-difference ``(div D)_j = sum_i d_i D_ij`` with periodic wraparound."""
    D = np.asarray(D, dtype=float)
    n1, n2 = D.shape[:2]
    h1, h2 = 1.0 / n1, 1.0 / n2
    d1 = (np.roll(D, -1, axis=0) - np.roll(D, 1, axis=0)) / (2 * h1)
    d2 = (np.roll(D, -1, axis=1) - np.roll(D, 1, axis=1)) / (2 * h2)
    return d1[..., 0, :] + d2[..., 1, :]


@dataclass
class PhysicalFieldSet:
    """Gridded velocity, diffusivity (with divergence) and decay."""

    velocity: np.ndarray
    diffusivity: np.ndarray
    diffusivity_divergence: np.ndarray
    decay: np.ndarray
    grid: GridSpec = field(init=False)

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.grid = GridSpec.from_shape(self.velocity.shape[:2])
        shape = self.grid.shape
        self.diffusivity = np.asarray(self.diffusivity, dtype=float)
        self.diffusivity_divergence = np.asarray(self.diffusivity_divergence, dtype=float)
        self.decay = np.asarray(self.decay, dtype=float)
        expected = {
            "velocity": shape + (2,),
            "diffusivity": shape + (2, 2),
            "diffusivity_divergence": shape + (2,),
            "decay": shape,
        }
        for name, shp in expected.items():
            arr = getattr(self, name)
            if arr.shape != shp:
                raise ConfigurationError(f"{name} has shape {arr.shape}, expected {shp}")
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"{name} contains non-finite values")
        _check_psd(self.diffusivity)

    @classmethod
    def build(cls, grid: GridSpec, velocity=None, diffusivity=0.0, decay=0.0):
        """Assemble from loosely specified parts.

        ``velocity`` may be a gridded array, a constant 2-vector, a
        :class:`VelocityFieldModel` or None; ``diffusivity`` a scalar, 2x2
        matrix or gridded ``(n1, n2, 2, 2)`` array (divergence is then taken
        numerically); ``decay`` a scalar, gridded array or :class:`DecayModel`.
        """
        if velocity is None:
            v = np.zeros(grid.shape + (2,))
        elif isinstance(velocity, VelocityFieldModel):
            v = eval_velocity(velocity, grid)
        else:
            v = np.asarray(velocity, dtype=float)
            if v.shape == (2,):
                v = np.broadcast_to(v, grid.shape + (2,)).copy()
        dd = np.asarray(diffusivity, dtype=float)
        if dd.ndim <= 2:
            D, divD = constant_diffusivity(dd, grid)
        else:
            D, divD = dd, numeric_divergence(dd, grid)
        if isinstance(decay, DecayModel):
            z = eval_decay(decay, grid)
        else:
            z = np.asarray(decay, dtype=float)
            if z.ndim == 0:
                z = np.full(grid.shape, float(z))
        return cls(v, D, divD, z)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.velocity, self.diffusivity, self.diffusivity_divergence, self.decay):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]
