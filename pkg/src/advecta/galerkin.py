"""Galerkin projection of the convection-diffusion operator onto the packed Fourier basis.

The operator ``L xi = -v.grad(xi) + div(D grad(xi)) - zeta xi`` acts on a
basis function as

    L f^R_k = A_k f^I_k + B_k f^R_k,      L f^I_k = -A_k f^R_k + B_k f^I_k,

with ``A_k(s) = kt.(v - div D)`` and ``B_k(s) = -kt' D kt - zeta`` where
``kt = 2 pi k``. Projecting onto ``f_{k'}`` with mesh quadrature turns every
integral into a Fourier coefficient of ``A_k`` or ``B_k`` at ``k - k'`` or
``k + k'``, so the whole matrix comes from six 2D DFTs of the input fields.
:func:`assemble_G_bruteforce` evaluates the twelve Psi integrals directly
and is kept as the reference the fast path is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError, NumericError
from .fields import PhysicalFieldSet
from .spectral import GridSpec, WavenumberSets, analysis_matrix


@dataclass(frozen=True)
class TransitionGenerator:
    """Dense ``K x K`` generator acting on packed coefficient vectors."""

    sets: WavenumberSets
    g: np.ndarray
    assembled_from: str = ""

    @property
    def dim(self) -> int:
        return self.g.shape[0]


@dataclass
class NoiseSpec:
    """Diagonal spectral densities: ``h`` for the forcing, ``h0`` for the initial state."""

    h: np.ndarray
    h0: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.h0 = np.asarray(self.h0, dtype=float)
        if self.h.shape != self.h0.shape or self.h.ndim != 1:
            raise ConfigurationError("h and h0 must be vectors of equal length")
        if np.any(self.h < 0) or np.any(self.h0 < 0):
            raise ConfigurationError("spectral densities must be non-negative")

    @classmethod
    def isotropic(cls, sets: WavenumberSets, h: float, h0: float | None = None):
        h0 = h if h0 is None else h0
        return cls(np.full(sets.dim, float(h)), np.full(sets.dim, float(h0)))

    @classmethod
    def power_law(cls, sets: WavenumberSets, a: float, b: float, h0=None):
        """``h(k) = a (1 + |2 pi k|^2)^(-b)``, equal for the R and I parts of a mode."""
        k2 = ((2.0 * np.pi * sets.coeff_modes) ** 2).sum(axis=1)
        h = a * (1.0 + k2) ** (-b)
        if h0 is None:
            h0 = h
        elif np.ndim(h0) == 0:
            h0 = np.full(sets.dim, float(h0))
        return cls(h, h0)

    @property
    def H(self) -> np.ndarray:
        return np.diag(self.h)

    @property
    def H0(self) -> np.ndarray:
        return np.diag(self.h0)


def _as_matrix(G) -> np.ndarray:
    return G.g if isinstance(G, TransitionGenerator) else np.asarray(G, dtype=float)


def _diag_of(noise, which="h"):
    if isinstance(noise, NoiseSpec):
        return getattr(noise, which)
    return np.asarray(noise, dtype=float)


# -- assembly ---------------------------------------------------------------


def _check_grid(fields: PhysicalFieldSet, sets: WavenumberSets):
    if fields.grid.shape != sets.grid.shape:
        raise ConfigurationError(
            f"fields are on {fields.grid.shape} but the wavenumber sets on {sets.grid.shape}"
        )


def _pad_spectrum(W):
    """Embed an ``(n1, n2)`` FFT table in ``(2 n1, 2 n2)``, splitting Nyquist terms evenly."""
    n1, n2 = W.shape
    out = np.zeros((2 * n1, 2 * n2), dtype=complex)
    k1 = np.fft.fftfreq(n1, 1.0 / n1).astype(int)
    k2 = np.fft.fftfreq(n2, 1.0 / n2).astype(int)
    for i, a in enumerate(k1):
        rows = [(a, 1.0)] if abs(a) != n1 // 2 else [(a, 0.5), (-a, 0.5)]
        for j, b in enumerate(k2):
            cols = [(b, 1.0)] if abs(b) != n2 // 2 else [(b, 0.5), (-b, 0.5)]
            for ra, wa in rows:
                for cb, wb in cols:
                    out[ra % (2 * n1), cb % (2 * n2)] += wa * wb * W[i, j]
    return out


def _weight_spectra(fields: PhysicalFieldSet, quadrature: str = "mesh"):
    u = fields.velocity - fields.diffusivity_divergence
    D = fields.diffusivity
    arrays = [u[..., 0], u[..., 1], D[..., 0, 0], D[..., 0, 1], D[..., 1, 1], fields.decay]
    n = fields.grid.size
    spectra = [np.fft.fft2(a) / n for a in arrays]
    if quadrature == "exact":
        spectra = [_pad_spectrum(W) for W in spectra]
    elif quadrature != "mesh":
        raise ConfigurationError(f"unknown quadrature {quadrature!r}")
    return spectra


def assemble_G(fields: PhysicalFieldSet, sets: WavenumberSets,
               quadrature: str = "mesh") -> TransitionGenerator:
    """Assemble the generator from DFTs of the weight fields (product-to-sum path).

    ``quadrature="mesh"`` uses mesh means, which alias once ``k + k'`` plus the
    field bandwidth leaves the lattice. ``"exact"`` integrates the trigonometric
    interpolants of the weight fields exactly, which keeps the advective part
    skew when the velocity is divergence-free.
    """
    _check_grid(fields, sets)
    U1, U2, D11, D12, D22, Z = _weight_spectra(fields, quadrature)
    n1, n2 = U1.shape
    modes = np.concatenate([sets.real_modes, sets.pair_modes])
    nr, nm = sets.n_real, len(modes)

    # rows index the target mode k', columns the source mode k
    kp, k = modes[:, None, :], modes[None, :, :]
    p = ((k[..., 0] - kp[..., 0]) % n1, (k[..., 1] - kp[..., 1]) % n2)
    q = ((k[..., 0] + kp[..., 0]) % n1, (k[..., 1] + kp[..., 1]) % n2)
    kt = 2.0 * np.pi * modes.astype(float)
    k1, k2 = kt[None, :, 0], kt[None, :, 1]

    def a_hat(idx):
        return k1 * U1[idx] + k2 * U2[idx]

    def b_hat(idx):
        return -(k1 * k1 * D11[idx] + 2.0 * k1 * k2 * D12[idx] + k2 * k2 * D22[idx]) - Z[idx]

    Ap, Aq, Bp, Bq = a_hat(p), a_hat(q), b_hat(p), b_hat(q)
    # mesh means of W * (cos|sin)(2 pi k.s) * (cos|sin)(2 pi k'.s)
    RR = lambda wp, wq: 0.5 * (wp.real + wq.real)  # noqa: E731
    IR = lambda wp, wq: -0.5 * (wq.imag + wp.imag)  # noqa: E731
    RI = lambda wp, wq: 0.5 * (wp.imag - wq.imag)  # noqa: E731
    II = lambda wp, wq: 0.5 * (wp.real - wq.real)  # noqa: E731

    from_r_to_r = IR(Ap, Aq) + RR(Bp, Bq)
    from_i_to_r = -RR(Ap, Aq) + IR(Bp, Bq)
    from_r_to_i = II(Ap, Aq) + RI(Bp, Bq)
    from_i_to_i = -RI(Ap, Aq) + II(Bp, Bq)

    mult = np.ones(nm)
    mult[nr:] = 2.0
    K = sets.dim
    g = np.empty((K, K))
    g[:nm, :nm] = from_r_to_r * mult
    g[:nm, nm:] = 2.0 * from_i_to_r[:, nr:]
    g[nm:, :nm] = from_r_to_i[nr:, :] * mult
    g[nm:, nm:] = 2.0 * from_i_to_i[nr:, nr:]
    return TransitionGenerator(sets, g, fields.fingerprint())


def _mesh(grid: GridSpec):
    s1, s2 = grid.points()
    return s1.ravel(), s2.ravel()


def _psi_against(kprime, ks, fields: PhysicalFieldSet, s):
    """All twelve Psi(k, k') for one target ``k'`` and many sources ``ks``; shape ``(12, len(ks))``."""
    v = fields.velocity.reshape(-1, 2)
    D = fields.diffusivity.reshape(-1, 2, 2)
    divD = fields.diffusivity_divergence.reshape(-1, 2)
    zeta = fields.decay.ravel()
    ks = np.atleast_2d(ks)
    kt = 2.0 * np.pi * ks.astype(float)  # (m, 2)

    arg = 2.0 * np.pi * (np.outer(ks[:, 0], s[0]) + np.outer(ks[:, 1], s[1]))  # (m, N)
    fR, fI = np.cos(arg), np.sin(arg)
    argp = 2.0 * np.pi * (kprime[0] * s[0] + kprime[1] * s[1])
    gR, gI = np.cos(argp), np.sin(argp)

    vk = kt @ v.T  # (m, N): v_s . kt
    dk = kt @ divD.T  # (m, N): (div D)_s . kt
    kDk = np.einsum("ma,nab,mb->mn", kt, D, kt)

    mean = lambda integrand: integrand.mean(axis=1)  # noqa: E731
    return np.array([
        mean(vk * fI * gR),
        -mean(vk * fR * gR),
        mean(vk * fI * gI),
        -mean(vk * fR * gI),
        mean((-kDk * fR - dk * fI) * gR),
        mean((-kDk * fI + dk * fR) * gR),
        mean((-kDk * fR - dk * fI) * gI),
        mean((-kDk * fI + dk * fR) * gI),
        -mean(zeta * fR * gR),
        -mean(zeta * fI * gR),
        -mean(zeta * fR * gI),
        -mean(zeta * fI * gI),
    ])


def psi_integrals(k, kprime, fields: PhysicalFieldSet) -> np.ndarray:
    """The twelve Galerkin integrals ``Psi_1 .. Psi_12`` for source ``k`` and target ``k'``.

    Integrals are mesh means over the unit square. The divergence term in
    ``Psi_6`` and ``Psi_8`` enters with a plus sign, as required by
    ``div(D grad f^I_k) = -kt' D kt f^I_k + (div D).kt f^R_k``.
    """
    s = _mesh(fields.grid)
    return _psi_against(np.asarray(kprime), np.asarray([k]), fields, s)[:, 0]


def basis_norm(k, grid: GridSpec) -> float:
    """``C_k``: mesh mean of ``cos^2(2 pi k.s)``."""
    s = _mesh(grid)
    return float(np.mean(np.cos(2.0 * np.pi * (k[0] * s[0] + k[1] * s[1])) ** 2))


def assemble_G_bruteforce(fields: PhysicalFieldSet, sets: WavenumberSets) -> TransitionGenerator:
    """Row-by-row assembly from the Psi integrals with their ``1/C`` and ``1/(2C)`` prefactors."""
    _check_grid(fields, sets)
    s = _mesh(sets.grid)
    real, pairs = sets.real_modes, sets.pair_modes
    modes = np.concatenate([real, pairs])
    nr, nm = len(real), len(modes)
    K = sets.dim
    g = np.zeros((K, K))
    for row, kp in enumerate(modes):
        psi = _psi_against(kp, modes, fields, s)
        p159 = psi[0] + psi[4] + psi[8]
        p2610 = psi[1] + psi[5] + psi[9]
        p3711 = psi[2] + psi[6] + psi[10]
        p4812 = psi[3] + psi[7] + psi[11]
        C = basis_norm(kp, sets.grid)
        if row < nr:
            g[row, :nr] = p159[:nr] / C
            g[row, nr:nm] = 2.0 * p159[nr:] / C
            g[row, nm:] = 2.0 * p2610[nr:] / C
        else:
            g[row, :nr] = p159[:nr] / (2.0 * C)
            g[row, nr:nm] = p159[nr:] / C
            g[row, nm:] = p2610[nr:] / C
            irow = row - nr + nm
            g[irow, :nr] = p3711[:nr] / (2.0 * C)
            g[irow, nr:nm] = p3711[nr:] / C
            g[irow, nm:] = p4812[nr:] / C
    return TransitionGenerator(sets, g, fields.fingerprint())


def constant_coefficient_blocks(velocity, d, zeta, sets: WavenumberSets):
    """Closed-form generator for constant ``v``, ``D = d I`` and ``zeta``.

    Each pair mode gets the rotation-damping block
    ``[[-d|kt|^2 - zeta, -v.kt], [v.kt, -d|kt|^2 - zeta]]``.
    """
    K = sets.dim
    g = np.zeros((K, K))
    nr, npair = sets.n_real, sets.n_pair
    v = np.asarray(velocity, dtype=float)
    for i, k in enumerate(sets.real_modes):
        kt = 2.0 * np.pi * k
        g[i, i] = -d * kt @ kt - zeta
    for j, k in enumerate(sets.pair_modes):
        kt = 2.0 * np.pi * k
        r, c = nr + j, nr + npair + j
        damp = -d * kt @ kt - zeta
        g[r, r] = g[c, c] = damp
        g[r, c] = -v @ kt
        g[c, r] = v @ kt
    return g


# -- discrete-time quantities -------------------------------------------------


def matrix_exponential(G, delta_t: float) -> np.ndarray:
    """``exp(G * delta_t)`` by Pade scaling-and-squaring."""
    g = _as_matrix(G)
    if delta_t < 0:
        raise ValueError("delta_t must be non-negative")
    if not np.all(np.isfinite(g)):
        raise NumericError("generator has non-finite entries")
    if delta_t == 0:
        return np.eye(g.shape[0])
    E = scipy.linalg.expm(g * delta_t)
    if not np.all(np.isfinite(E)):
        raise NumericError("matrix exponential overflowed")
    return E


def _symmetrize(a):
    return 0.5 * (a + a.T)


def _van_loan(g, H, delta_t):
    K = g.shape[0]
    M = np.zeros((2 * K, 2 * K))
    M[:K, :K] = -g
    M[:K, K:] = H
    M[K:, K:] = g.T
    phi = scipy.linalg.expm(M * delta_t)
    Ad = phi[K:, K:].T
    return Ad, Ad @ phi[:K, K:]


def process_noise_cov(G, noise, delta_t: float) -> np.ndarray:
    """``int_0^dt exp(G u) H exp(G' u) du`` by the Van Loan block exponential.

    Stiff generators would overflow ``exp(-G dt)``, so the block exponential
    is taken over ``dt / 2^m`` and doubled back with
    ``Q(2t) = Q(t) + E(t) Q(t) E(t)'``.
    """
    g = _as_matrix(G)
    H = np.diag(_diag_of(noise, "h"))
    if delta_t <= 0:
        raise ValueError("delta_t must be positive")
    if not np.all(np.isfinite(g)):
        raise NumericError("generator has non-finite entries")
    norm = np.abs(g).sum(axis=0).max() * delta_t
    m = max(0, math.ceil(math.log2(norm / 16.0))) if norm > 16.0 else 0
    E, Q = _van_loan(g, H, delta_t / 2**m)
    for _ in range(m):
        Q = Q + E @ Q @ E.T
        E = E @ E
    if not np.all(np.isfinite(Q)):
        raise NumericError("process noise covariance is not finite")
    return _symmetrize(Q)


def alpha_cov(G, noise: NoiseSpec, t: float, delta_t: float) -> np.ndarray:
    """``cov(alpha(t + delta_t), alpha(t))`` for ``alpha(0) ~ N(0, H0)``."""
    if t < 0 or delta_t < 0:
        raise ValueError("t and delta_t must be non-negative")
    g = _as_matrix(G)
    Et = matrix_exponential(g, t)
    var = Et @ np.diag(_diag_of(noise, "h0")) @ Et.T
    if t > 0:
        var = var + process_noise_cov(g, noise, t)
    return matrix_exponential(g, delta_t) @ var


def stationary_cov(G, noise) -> np.ndarray:
    """Limit of ``var(alpha(t))`` as ``t -> inf`` for a stable generator."""
    g = _as_matrix(G)
    return _symmetrize(scipy.linalg.solve_continuous_lyapunov(g, -np.diag(_diag_of(noise, "h"))))


# -- energy -----------------------------------------------------------------


def mode_energy(vec, sets: WavenumberSets) -> np.ndarray:
    """``aR^2`` for each real mode followed by ``aR^2 + aI^2`` for each pair mode."""
    v = np.asarray(vec, dtype=float)
    rs, pr, pi = sets.mode_slices()
    return np.concatenate([v[rs] ** 2, v[pr] ** 2 + v[pi] ** 2])


def total_energy(vec, sets: WavenumberSets) -> float:
    """Mesh mean of ``xi^2``: mode energies weighted 1 (real) and 2 (pairs)."""
    e = mode_energy(vec, sets)
    w = np.ones_like(e)
    w[sets.n_real:] = 2.0
    return float(w @ e)


# -- IDE representation -----------------------------------------------------


@dataclass(frozen=True)
class IdeKernel:
    """Redistribution weights ``omega[s, x]`` so that ``xi' = (1/N) omega @ xi``."""

    grid: GridSpec
    delta_t: float
    weights: np.ndarray

    def apply(self, field) -> np.ndarray:
        x = np.asarray(field, dtype=float)
        return (self.weights @ x.ravel() / self.grid.size).reshape(self.grid.shape)


def _complex_coordinates(sets: WavenumberSets):
    """Wavenumbers of the complex series and the map ``T`` with ``c = T alpha``."""
    nr, npair = sets.n_real, sets.n_pair
    K = sets.dim
    ks = np.concatenate([sets.real_modes, sets.pair_modes, -sets.pair_modes])
    T = np.zeros((K, K), dtype=complex)
    T[np.arange(nr), np.arange(nr)] = 1.0
    for j in range(npair):
        r, i = nr + j, nr + npair + j
        T[r, r], T[r, i] = 1.0, -1j
        T[i, r], T[i, i] = 1.0, 1j
    return ks, T


def ide_kernel(G, delta_t: float) -> IdeKernel:
    """Kernel ``omega_s(x) = sum_{j,j'} [e^{G dt}]_{j,j'} exp(i(k_j.s - k_j'.x))`` in complex form."""
    if not isinstance(G, TransitionGenerator):
        raise TypeError("ide_kernel needs a TransitionGenerator (for its wavenumber sets)")
    sets = G.sets
    ks, T = _complex_coordinates(sets)
    E = matrix_exponential(G, delta_t)
    Ec = T @ E @ np.linalg.inv(T)
    s1, s2 = sets.grid.points()
    phase = 2.0 * np.pi * (np.outer(s1.ravel(), ks[:, 0]) + np.outer(s2.ravel(), ks[:, 1]))
    Phi = np.exp(1j * phase)  # (N, K)
    omega = Phi @ Ec @ Phi.conj().T
    return IdeKernel(sets.grid, float(delta_t), np.real(omega))


def ide_step(field, G, delta_t: float) -> np.ndarray:
    """One transition step written as ``(1/N) sum_i omega_s(x_i) xi(x_i)``."""
    return ide_kernel(G, delta_t).apply(field)


def spectral_step_matrix(G, delta_t: float) -> np.ndarray:
    """``(N, N)`` grid operator ``B exp(G dt) A`` (analysis, propagate, synthesis)."""
    from .spectral import basis_matrix

    sets = G.sets
    return basis_matrix(sets) @ matrix_exponential(G, delta_t) @ analysis_matrix(sets)
