"""Real-valued 2D Fourier analysis on regular periodic grids.

Fields are plain ``(n1, n2)`` float arrays sampled at ``s = (i/n1, j/n2)`` on
the unit square; axis 0 is the ``s1`` (x, east) direction and axis 1 is
``s2`` (y, north). Complex coefficient tables are ``(n1, n2)`` arrays in
numpy FFT order, so ``X(k1, k2)`` lives at ``[k1 % n1, k2 % n2]``.

The forward transform carries the ``1/(n1 n2)`` factor and the inverse
carries none. A real field is written as

    x(s) = sum_{k in real modes} aR_k cos(2 pi k.s)
         + 2 sum_{k in pair modes} (aR_k cos(2 pi k.s) + aI_k sin(2 pi k.s))

with ``X(k) = aR_k - i aI_k``. Packed coefficient vectors are ordered
``(aR over real modes, aR over pair modes, aI over pair modes)``, each block
lexicographic in ``(k1, k2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, InvalidSpectrumError

SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    """An ``n1 x n2`` periodic grid on the unit square.

    ``spacing`` is the physical cell size and is carried as metadata only.
    """

    n1: int
    n2: int
    spacing: tuple[float, float] | None = None

    def __post_init__(self):
        for name in ("n1", "n2"):
            n = getattr(self, name)
            if int(n) != n or n < 2 or n % 2:
                raise ConfigurationError(f"grid dimension {name}={n} must be an even integer >= 2")
        if self.spacing is None:
            object.__setattr__(self, "spacing", (1.0 / self.n1, 1.0 / self.n2))

    @classmethod
    def from_shape(cls, shape) -> "GridSpec":
        if len(shape) != 2:
            raise ConfigurationError(f"expected a 2D field, got shape {tuple(shape)}")
        return cls(int(shape[0]), int(shape[1]))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Mesh coordinates ``(s1, s2)``, each of shape ``(n1, n2)``."""
        s1 = np.arange(self.n1) / self.n1
        s2 = np.arange(self.n2) / self.n2
        return np.meshgrid(s1, s2, indexing="ij")


def _check_field(field) -> np.ndarray:
    x = np.asarray(field, dtype=float)
    GridSpec.from_shape(x.shape)
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("field contains non-finite values")
    return x


def dft2(field) -> np.ndarray:
    """Forward 2D DFT with ``1/(n1 n2)`` normalization, in FFT index order."""
    x = _check_field(field)
    return np.fft.fft2(x) / x.size


def symmetry_residual(table) -> float:
    """Max ``|X(k) - conj X(-k)|`` over the table."""
    X = np.asarray(table)
    mirrored = np.conj(np.roll(np.flip(X, axis=(0, 1)), 1, axis=(0, 1)))
    return float(np.max(np.abs(X - mirrored))) if X.size else 0.0


def _check_symmetric(table, tol=SYMMETRY_TOL):
    X = np.asarray(table, dtype=complex)
    GridSpec.from_shape(X.shape)
    scale = max(1.0, float(np.max(np.abs(X))))
    resid = symmetry_residual(X)
    if resid > tol * scale:
        raise InvalidSpectrumError(
            f"coefficient table is not conjugate-symmetric (residual {resid:.3e})"
        )
    return X


def idft2(table) -> np.ndarray:
    """Inverse of :func:`dft2`; rejects tables that do not describe a real field."""
    X = _check_symmetric(table)
    return np.real(np.fft.ifft2(X)) * X.size


def wavenumbers(n: int) -> np.ndarray:
    """Principal wavenumbers ``-n/2+1 .. n/2`` in FFT index order."""
    k = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    k[k == -n // 2] = n // 2
    return k


@dataclass(frozen=True)
class WavenumberSets:
    """Mode bookkeeping for the packed real representation.

    ``omega1`` holds the four self-conjugate modes, ``omega2`` one
    representative per conjugate pair of the full lattice and ``omega3`` the
    same with the highest frequencies ``n/2`` removed. ``includes_highest``
    selects between the full (``omega1`` + ``omega2``) and reduced
    (``(0, 0)`` + ``omega3``) layouts. ``cutoff`` optionally keeps only modes
    with ``|k1|, |k2| <= cutoff``.
    """

    grid: GridSpec
    omega1: tuple
    omega2: tuple
    omega3: tuple
    includes_highest: bool
    cutoff: int | None = None

    def _keep(self, k):
        return self.cutoff is None or (abs(k[0]) <= self.cutoff and abs(k[1]) <= self.cutoff)

    @cached_property
    def real_modes(self) -> np.ndarray:
        modes = self.omega1 if self.includes_highest else ((0, 0),)
        return np.array([k for k in modes if self._keep(k)], dtype=int).reshape(-1, 2)

    @cached_property
    def pair_modes(self) -> np.ndarray:
        modes = self.omega2 if self.includes_highest else self.omega3
        return np.array([k for k in modes if self._keep(k)], dtype=int).reshape(-1, 2)

    @property
    def n_real(self) -> int:
        return len(self.real_modes)

    @property
    def n_pair(self) -> int:
        return len(self.pair_modes)

    @property
    def dim(self) -> int:
        return self.n_real + 2 * self.n_pair

    @property
    def form(self) -> int:
        """16 for the full layout, 18 for the reduced one (named after the series forms)."""
        return 16 if self.includes_highest else 18

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """Weight of each packed coefficient in the series: 1 for real modes, 2 for pairs."""
        return np.concatenate([np.ones(self.n_real), np.full(2 * self.n_pair, 2.0)])

    @cached_property
    def coeff_modes(self) -> np.ndarray:
        """``(K, 2)`` wavenumber of every packed coefficient."""
        return np.concatenate([self.real_modes, self.pair_modes, self.pair_modes])

    @cached_property
    def coeff_kind(self) -> np.ndarray:
        """``'R'`` or ``'I'`` for every packed coefficient."""
        return np.array(["R"] * (self.n_real + self.n_pair) + ["I"] * self.n_pair)

    def with_cutoff(self, cutoff: int | None) -> "WavenumberSets":
        return WavenumberSets(
            self.grid, self.omega1, self.omega2, self.omega3, self.includes_highest, cutoff
        )

    def mode_slices(self):
        nr, npair = self.n_real, self.n_pair
        return slice(0, nr), slice(nr, nr + npair), slice(nr + npair, nr + 2 * npair)


def _is_representative(k1, k2, n1, n2):
    """Half-plane choice of one mode per conjugate pair ``{k, -k}``."""
    h1, h2 = n1 // 2, n2 // 2
    if 0 < k1 < h1:
        return True
    if k1 in (0, h1):
        return 0 < k2 < h2
    return False


def build_wavenumber_sets(grid: GridSpec, includes_highest: bool = False,
                          cutoff: int | None = None) -> WavenumberSets:
    """Enumerate the real-representation wavenumber sets for ``grid``."""
    n1, n2 = grid.n1, grid.n2
    h1, h2 = n1 // 2, n2 // 2
    omega1 = ((0, 0), (0, h2), (h1, 0), (h1, h2))
    k1s = range(-h1 + 1, h1 + 1)
    k2s = range(-h2 + 1, h2 + 1)
    omega2 = tuple(
        (k1, k2) for k1 in k1s for k2 in k2s if _is_representative(k1, k2, n1, n2)
    )
    omega3 = tuple(k for k in omega2 if k[0] != h1 and k[1] != h2)
    return WavenumberSets(grid, omega1, omega2, omega3, bool(includes_highest), cutoff)


def pack(table, sets: WavenumberSets) -> np.ndarray:
    """Real coefficient vector from a conjugate-symmetric coefficient table."""
    X = _check_symmetric(table)
    if X.shape != sets.grid.shape:
        raise ConfigurationError(f"table shape {X.shape} does not match grid {sets.grid.shape}")
    return _pack_unchecked(X, sets)


def _pack_unchecked(X, sets):
    n1, n2 = sets.grid.shape
    r, p = sets.real_modes, sets.pair_modes
    xr = X[r[:, 0] % n1, r[:, 1] % n2]
    xp = X[p[:, 0] % n1, p[:, 1] % n2]
    return np.concatenate([xr.real, xp.real, -xp.imag])


def unpack(vec, sets: WavenumberSets) -> np.ndarray:
    """Full conjugate-symmetric table; modes outside ``sets`` are zero."""
    v = np.asarray(vec, dtype=float)
    if v.shape != (sets.dim,):
        raise ConfigurationError(f"vector length {v.shape} does not match dimension {sets.dim}")
    n1, n2 = sets.grid.shape
    X = np.zeros((n1, n2), dtype=complex)
    rs, ps_r, ps_i = sets.mode_slices()
    r, p = sets.real_modes, sets.pair_modes
    X[r[:, 0] % n1, r[:, 1] % n2] = v[rs]
    c = v[ps_r] - 1j * v[ps_i]
    X[p[:, 0] % n1, p[:, 1] % n2] = c
    X[-p[:, 0] % n1, -p[:, 1] % n2] = np.conj(c)
    return X


def pack_field(field, sets: WavenumberSets) -> np.ndarray:
    """``pack(dft2(field))``; modes outside ``sets`` are discarded."""
    return _pack_unchecked(dft2(field), sets)


def reconstruct(vec, sets: WavenumberSets) -> np.ndarray:
    """Field on the grid from a packed vector (``idft2(unpack(vec))``)."""
    X = unpack(vec, sets)
    return np.real(np.fft.ifft2(X)) * X.size


def evaluate_basis(k, s, kind: str = "R"):
    """``cos`` (kind R) or ``sin`` (kind I) of ``2 pi (s1 k1 + s2 k2)``."""
    arg = 2.0 * np.pi * (np.asarray(s[0]) * k[0] + np.asarray(s[1]) * k[1])
    if kind == "R":
        return np.cos(arg)
    if kind == "I":
        return np.sin(arg)
    raise ValueError(f"basis kind must be 'R' or 'I', got {kind!r}")


def basis_matrix(sets: WavenumberSets) -> np.ndarray:
    """``(n1*n2, K)`` synthesis matrix: ``reconstruct(v).ravel() == B @ v``."""
    s1, s2 = sets.grid.points()
    s = (s1.ravel(), s2.ravel())
    cols = [evaluate_basis(k, s, "R") for k in sets.real_modes]
    cols += [2.0 * evaluate_basis(k, s, "R") for k in sets.pair_modes]
    cols += [2.0 * evaluate_basis(k, s, "I") for k in sets.pair_modes]
    return np.stack(cols, axis=1) if cols else np.zeros((sets.grid.size, 0))


def analysis_matrix(sets: WavenumberSets) -> np.ndarray:
    """``(K, n1*n2)`` matrix with ``pack_field(x) == A @ x.ravel()``."""
    s1, s2 = sets.grid.points()
    s = (s1.ravel(), s2.ravel())
    n = sets.grid.size
    rows = [evaluate_basis(k, s, "R") for k in sets.real_modes]
    rows += [evaluate_basis(k, s, "R") for k in sets.pair_modes]
    rows += [evaluate_basis(k, s, "I") for k in sets.pair_modes]
    return np.stack(rows, axis=0) / n if rows else np.zeros((0, n))


def lattice_cutoff(angular_cutoff: float) -> int:
    """Largest lattice wavenumber ``k`` with ``2 pi k <= angular_cutoff``."""
    if angular_cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    if math.isinf(angular_cutoff):
        return 10**9
    # guard against 2*pi*k landing a hair above an exact multiple
    return int(math.floor(angular_cutoff / (2.0 * math.pi) + 1e-12))


def _lowpass_mask(shape, angular_cutoff):
    kc = lattice_cutoff(angular_cutoff)
    k1 = np.abs(wavenumbers(shape[0]))[:, None]
    k2 = np.abs(wavenumbers(shape[1]))[None, :]
    return (k1 <= kc) & (k2 <= kc)


def lowpass(x, cutoff: float, sets: WavenumberSets | None = None):
    """Zero every coefficient with ``|2 pi k1|`` or ``|2 pi k2|`` above ``cutoff``.

    ``x`` is a 2D field, or a packed vector when ``sets`` is given; the result
    has the same type.
    """
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    if sets is not None:
        v = np.asarray(x, dtype=float)
        kc = lattice_cutoff(cutoff)
        keep = np.all(np.abs(sets.coeff_modes) <= kc, axis=1)
        return np.where(keep, v, 0.0)
    X = dft2(x)
    X = np.where(_lowpass_mask(X.shape, cutoff), X, 0.0)
    return np.real(np.fft.ifft2(X)) * X.size
