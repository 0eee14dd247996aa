"""Lindblad dynamics of vibronic models coupled to per-mode thermal baths."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.integrate import DOP853

from .closed import Trajectory
from .constants import HBAR
from .mapping import bose_einstein
from .operators import (
    LEAKAGE_THRESHOLD,
    LayoutError,
    SpaceLayout,
    check_hermitian,
    mode_operators,
    warn_leakage,
)

RTOL = 1e-8
ATOL = 1e-10


class BathError(ValueError):
    pass


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class BathSpec:
    """Per-mode coupling ``gamma`` (1/fs, molecular frame) and occupation ``nbar``."""

    gamma: np.ndarray
    nbar: np.ndarray
    temperature: float | None = None
    realization: tuple | None = None

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        n = np.broadcast_to(np.asarray(self.nbar, dtype=float), g.shape).copy()
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "nbar", n)
        if np.any(g < 0):
            raise BathError("bath couplings must be non-negative")
        if np.any(n < 0):
            raise BathError("bath occupations must be non-negative")

    @property
    def n_modes(self) -> int:
        return self.gamma.shape[0]

    def scaled(self, F: float) -> BathSpec:
        """Rates in simulator units; occupations are dimensionless and unchanged."""
        return replace(self, gamma=F * self.gamma)


def thermal_bath(gamma, omega, T: float) -> BathSpec:
    """Bath with Bose-Einstein occupations of modes ``omega`` (eV) at ``T`` (K)."""
    nbar = [bose_einstein(w, T) for w in np.atleast_1d(omega)]
    return BathSpec(gamma=gamma, nbar=nbar, temperature=T)


def ohmic_couplings(gamma0: float, omega_cut: float, omegas) -> np.ndarray:
    """gamma_j = gamma0 * omega_j * exp(-omega_j / omega_cut)."""
    if not omega_cut > 0:
        raise BathError(f"cutoff frequency must be positive, got {omega_cut}")
    if gamma0 < 0:
        raise BathError(f"gamma0 must be non-negative, got {gamma0}")
    w = np.asarray(omegas, dtype=float)
    return gamma0 * w * np.exp(-w / omega_cut)


BROADBAND_MAX_NBAR = 1.0


def broadband_cooling_approx(baths: BathSpec, common_gamma: float | None = None,
                             max_nbar: float = BROADBAND_MAX_NBAR) -> BathSpec:
    """Single cooling laser: zero occupations and one shared coupling.

    The shared coupling defaults to the mean of the input couplings. Baths
    with any occupation at or above ``max_nbar`` are outside the low
    temperature regime the approximation assumes.
    """
    if np.any(baths.nbar >= max_nbar):
        raise BathError(
            f"broadband cooling needs nbar << 1; got max nbar {baths.nbar.max():.3g}"
        )
    g = float(np.mean(baths.gamma)) if common_gamma is None else float(common_gamma)
    return BathSpec(gamma=np.full(baths.n_modes, g), nbar=np.zeros(baths.n_modes),
                    temperature=baths.temperature)


class LindbladGenerator:
    """Right-hand side of the thermal master equation.

    Written as ``-i(K rho - rho K^dag) + sum_c r_c L_c rho L_c^dag`` with the
    non-Hermitian ``K = H/hbar - (i/2) sum_c r_c L_c^dag L_c``. The evaluation
    assumes a Hermitian ``rho`` (so ``rho K^dag = (K rho)^dag``) and uses only
    sparse-dense products; the superoperator is never formed.
    """

    def __init__(self, H, baths: BathSpec, layout: SpaceLayout):
        H = sp.csr_matrix(H)
        if H.shape != (layout.dim, layout.dim):
            raise LayoutError(f"Hamiltonian shape {H.shape} does not match layout dimension {layout.dim}")
        if baths.n_modes != layout.n_modes:
            raise LayoutError(f"{baths.n_modes} bath entries for {layout.n_modes} modes")
        check_hermitian(H)
        self.layout = layout
        H = H / HBAR
        k_diag = H.diagonal().astype(complex)
        k_off = (H - sp.diags(H.diagonal())).tocsr()
        k_off.eliminate_zeros()
        self.channels = []
        for (a, _, _), g, n in zip(mode_operators(layout), baths.gamma, baths.nbar):
            a = sp.csr_matrix(a.real)
            ad = a.T.tocsr()
            for rate, L in ((g * (n + 1), a), (g * n, ad)):
                if rate > 0:
                    # L^dag L is diagonal for a and a^dag
                    k_diag = k_diag - 0.5j * rate * (L.T @ L).diagonal()
                    self.channels.append((rate, L))
        self.k_diag = k_diag[:, None]
        self.k_off_real = not np.any(k_off.imag.data) if k_off.nnz else True
        self.k_off = sp.csr_matrix(k_off.real) if self.k_off_real else k_off

    @staticmethod
    def _real_left(A, X):
        # real sparse A times complex dense X via its interleaved float view
        return (A @ X.view(np.float64)).view(np.complex128)

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        rho = np.ascontiguousarray(rho, dtype=complex)
        if self.k_off_real:
            X = self._real_left(self.k_off, rho)
        else:
            X = self.k_off @ rho
        X += self.k_diag * rho
        Xh = np.ascontiguousarray(X.T)
        np.conjugate(Xh, out=Xh)
        out = X
        out -= Xh
        out *= -1j
        for rate, L in self.channels:
            Y = self._real_left(L, rho)
            Yh = np.ascontiguousarray(Y.T)
            np.conjugate(Yh, out=Yh)
            out += rate * self._real_left(L, Yh)
        return out


def lindblad_rhs(rho, H, baths: BathSpec, layout: SpaceLayout) -> np.ndarray:
    """d rho / dt in 1/fs for Hamiltonian ``H`` (eV)."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (layout.dim, layout.dim):
        raise LayoutError(f"density matrix shape {rho.shape} does not match layout")
    return LindbladGenerator(H, baths, layout)(rho)


def pure_density(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


def thermal_state(layout: SpaceLayout, nbar, electronic=None) -> np.ndarray:
    """Product of Bose-Einstein mode states, with the qudit in ``electronic``
    (a density matrix, index, or maximally mixed when None).

    Each mode distribution is renormalized within its truncation.
    """
    if electronic is None:
        el = np.eye(layout.d) / layout.d
    elif np.isscalar(electronic):
        el = np.zeros((layout.d, layout.d))
        el[int(electronic), int(electronic)] = 1
    else:
        el = np.asarray(electronic)
    rho = el.astype(complex)
    for n_max, nb in zip(layout.truncations, np.broadcast_to(nbar, (layout.n_modes,))):
        k = np.arange(n_max)
        p = (nb / (1 + nb)) ** k if nb > 0 else (k == 0).astype(float)
        p = p / p.sum()
        rho = np.kron(rho, np.diag(p))
    return rho


class DensityObservables:
    def __init__(self, layout: SpaceLayout):
        self.layout = layout
        ops = mode_operators(layout)
        self.q = [o[1].tocsr() for o in ops]
        self.p = [o[2].tocsr() for o in ops]
        self.levels = [np.arange(n) for n in layout.truncations]

    def __call__(self, rho):
        lay = self.layout
        diag = np.real(np.diagonal(rho)).reshape(lay.shape)
        pops = diag.reshape(lay.d, -1).sum(axis=1)
        q = np.array([np.real(op.multiply(rho.T).sum()) for op in self.q])
        p = np.array([np.real(op.multiply(rho.T).sum()) for op in self.p])
        leak = np.empty(lay.n_modes)
        nmean = np.empty(lay.n_modes)
        for j, lv in enumerate(self.levels):
            marg = np.moveaxis(diag, j + 1, 0).reshape(lv.size, -1).sum(axis=1)
            leak[j] = marg[-1]
            nmean[j] = marg @ lv
        purity = float(np.real(np.vdot(rho, rho)))
        trace = float(np.real(np.trace(rho)))
        herm = float(np.max(np.abs(rho - rho.conj().T)))
        return pops, q, p, leak, nmean, purity, trace, herm


def propagate_lindblad(rho0, H, baths: BathSpec, times, layout: SpaceLayout,
                       rtol: float = RTOL, atol: float = ATOL, max_step: float = np.inf,
                       leakage_threshold: float = LEAKAGE_THRESHOLD) -> Trajectory:
    """Integrate the master equation with adaptive Dormand-Prince 8(5,3) steps.

    Observables are interpolated from the step's dense output at each grid
    time; the density matrix itself is not stored. ``extra`` carries
    ``purity``, ``trace_error``, ``hermiticity_error`` and per-mode
    ``mean_number`` series.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 1:
        rho0 = pure_density(rho0)
    dim = layout.dim
    if rho0.shape != (dim, dim):
        raise LayoutError(f"initial density matrix shape {rho0.shape} does not match layout")
    if abs(np.trace(rho0) - 1) > 1e-8:
        raise ValueError(f"initial density matrix has trace {np.trace(rho0).real:.10f}")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly ascending")
    gen = LindbladGenerator(H, baths, layout)
    obs = DensityObservables(layout)

    n = times.size
    pops = np.zeros((n, layout.d))
    q = np.zeros((n, layout.n_modes))
    p = np.zeros((n, layout.n_modes))
    leak = np.zeros((n, layout.n_modes))
    nmean = np.zeros((n, layout.n_modes))
    purity, trace_err, herm_err = np.zeros(n), np.zeros(n), np.zeros(n)

    def record(i, rho):
        pops[i], q[i], p[i], leak[i], nmean[i], purity[i], tr, herm_err[i] = obs(rho)
        trace_err[i] = tr - 1.0

    def fun(t, y):
        return gen(y.reshape(dim, dim)).ravel()

    i = 0
    while i < n and times[i] <= 0:
        record(i, rho0)
        i += 1
    if i < n:
        solver = DOP853(fun, 0.0, rho0.ravel(), times[-1], rtol=rtol, atol=atol, max_step=max_step)
        while i < n:
            if solver.status != "running":
                raise IntegrationError(
                    f"integration stopped at t={solver.t:.4f} fs before {times[i]:.4f} fs "
                    f"(status {solver.status})"
                )
            msg = solver.step()
            if solver.status == "failed":
                raise IntegrationError(
                    f"step failed at t={solver.t:.4f} fs (h={solver.step_size}): {msg}"
                )
            if i < n and times[i] <= solver.t:
                dense = solver.dense_output()
                while i < n and times[i] <= solver.t:
                    rho = solver.y if times[i] == solver.t else dense(times[i])
                    record(i, rho.reshape(dim, dim))
                    i += 1
    warn_leakage(leak, leakage_threshold)
    return Trajectory(times, pops, q, p, leak,
                      extra={"purity": purity, "trace_error": trace_err,
                             "hermiticity_error": herm_err, "mean_number": nmean})
