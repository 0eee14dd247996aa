"""Sparse operators on a qudit tensored with truncated Fock spaces.

Operators are plain ``scipy.sparse`` CSC matrices. The tensor-factor order is
fixed: the qudit comes first, followed by the bosonic modes in ascending
order, so a state vector reshapes to ``(d, n_1, ..., n_N)`` in C order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

DENSE_CUTOFF = 64
LEAKAGE_THRESHOLD = 1e-4
_ROUNDOFF = 64 * np.finfo(float).eps


class LayoutError(ValueError):
    """Operator or state does not fit the space layout."""


class InvalidTruncationError(ValueError):
    pass


class NotHermitianError(ValueError):
    pass


class LeakageWarning(UserWarning):
    """Population in the top retained Fock level exceeded the threshold."""


@dataclass(frozen=True)
class SpaceLayout:
    """Qudit with ``d`` levels followed by one truncated Fock space per mode."""

    d: int
    truncations: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "truncations", tuple(int(n) for n in self.truncations))
        if self.d < 1:
            raise LayoutError(f"qudit dimension must be >= 1, got {self.d}")
        for n in self.truncations:
            if n < 2:
                raise InvalidTruncationError(f"Fock truncation must be >= 2, got {n}")

    @property
    def n_modes(self) -> int:
        return len(self.truncations)

    @property
    def factor_dims(self) -> tuple[int, ...]:
        return (self.d, *self.truncations)

    @property
    def dim(self) -> int:
        return int(np.prod(self.factor_dims))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.factor_dims

    def mode_factor(self, j: int) -> int:
        """Factor index of mode ``j`` (0-based)."""
        if not 0 <= j < self.n_modes:
            raise LayoutError(f"mode index {j} out of range for {self.n_modes} modes")
        return j + 1


def _check_nmax(n_max: int) -> None:
    if n_max < 2:
        raise InvalidTruncationError(f"Fock truncation must be >= 2, got {n_max}")


def annihilation(n_max: int) -> sp.csc_matrix:
    """Lowering operator with sqrt(n) on the (n-1, n) entries."""
    _check_nmax(n_max)
    return sp.diags(np.sqrt(np.arange(1, n_max, dtype=float)), 1, shape=(n_max, n_max),
                    format="csc", dtype=complex)


def creation(n_max: int) -> sp.csc_matrix:
    return annihilation(n_max).conj().T.tocsc()


def number(n_max: int) -> sp.csc_matrix:
    _check_nmax(n_max)
    return sp.diags(np.arange(n_max, dtype=float), 0, format="csc", dtype=complex)


def position_q(n_max: int) -> sp.csc_matrix:
    """Dimensionless position ``(a^dag + a)/sqrt(2)``."""
    a = annihilation(n_max)
    return ((a + a.conj().T) / np.sqrt(2)).tocsc()


def momentum_p(n_max: int) -> sp.csc_matrix:
    """Dimensionless momentum ``i(a^dag - a)/sqrt(2)``."""
    a = annihilation(n_max)
    return (1j * (a.conj().T - a) / np.sqrt(2)).tocsc()


def identity(n: int) -> sp.csc_matrix:
    return sp.identity(n, dtype=complex, format="csc")


def qudit_projector(n: int, m: int, d: int) -> sp.csc_matrix:
    """Transfer operator ``|n><m|`` on a ``d``-level qudit."""
    if not (0 <= n < d and 0 <= m < d):
        raise IndexError(f"qudit indices ({n}, {m}) out of range for d={d}")
    return sp.csc_matrix(([1.0 + 0j], ([n], [m])), shape=(d, d))


def sigma_z() -> sp.csc_matrix:
    return (qudit_projector(0, 0, 2) - qudit_projector(1, 1, 2)).tocsc()


def sigma_x() -> sp.csc_matrix:
    return (qudit_projector(0, 1, 2) + qudit_projector(1, 0, 2)).tocsc()


def kron_all(ops) -> sp.csc_matrix:
    return reduce(lambda x, y: sp.kron(x, y, format="csc"), ops).tocsc()


def embed(op, factor_index: int, layout: SpaceLayout) -> sp.csc_matrix:
    """Place a single-factor operator into the full space.

    ``factor_index`` 0 is the qudit, ``j + 1`` is mode ``j``.
    """
    dims = layout.factor_dims
    if not 0 <= factor_index < len(dims):
        raise LayoutError(f"factor index {factor_index} out of range")
    op = sp.csc_matrix(op, dtype=complex)
    if op.shape != (dims[factor_index],) * 2:
        raise LayoutError(
            f"operator shape {op.shape} does not match factor {factor_index} "
            f"of dimension {dims[factor_index]}"
        )
    left = int(np.prod(dims[:factor_index]))
    right = int(np.prod(dims[factor_index + 1:]))
    out = op
    if left > 1:
        out = sp.kron(identity(left), out, format="csc")
    if right > 1:
        out = sp.kron(out, identity(right), format="csc")
    return out.tocsc()


def embed_product(qudit_op, mode_ops: dict[int, object], layout: SpaceLayout) -> sp.csc_matrix:
    """Kronecker product of a qudit operator with operators on selected modes."""
    factors = [sp.csc_matrix(qudit_op, dtype=complex) if qudit_op is not None else identity(layout.d)]
    for j, n in enumerate(layout.truncations):
        factors.append(sp.csc_matrix(mode_ops[j], dtype=complex) if j in mode_ops else identity(n))
    for f, dim in zip(factors, layout.factor_dims):
        if f.shape != (dim, dim):
            raise LayoutError(f"factor shape {f.shape} does not match dimension {dim}")
    return kron_all(factors)


def hermiticity_error(H) -> float:
    """Max |H - H^dag| relative to max |H| (0 for the zero matrix)."""
    if sp.issparse(H):
        diff = abs(H - H.conj().T)
        num = diff.max() if diff.nnz else 0.0
        scale = abs(H).max() if H.nnz else 0.0
    else:
        H = np.asarray(H)
        num = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
        scale = np.max(np.abs(H)) if H.size else 0.0
    return float(num / scale) if scale > 0 else 0.0


def is_hermitian(H, rtol: float = 1e-12) -> bool:
    return hermiticity_error(H) <= rtol


def check_hermitian(H, rtol: float = 1e-12) -> None:
    err = hermiticity_error(H)
    if err > rtol:
        raise NotHermitianError(f"operator is not Hermitian (relative error {err:.3e})")


def expm_apply(H, state, t: float, tol: float = 1e-10, krylov_dim: int = 30,
               check: bool = True) -> np.ndarray:
    """Return ``exp(-i H t) @ state`` for Hermitian ``H``.

    Small operators (dimension below ``DENSE_CUTOFF``) are diagonalized.
    Larger ones use a Lanczos approximation with adaptive substeps; each
    substep of length ``h`` is accepted when the a-posteriori error estimate
    is below ``tol * h / |t|``, so the total error stays near ``tol`` times the
    norm of ``state``.
    """
    v = np.asarray(state, dtype=complex)
    if v.ndim != 1 or v.shape[0] != H.shape[0]:
        raise LayoutError(f"state of shape {v.shape} does not match operator {H.shape}")
    if sp.issparse(H):
        data = H.data
    else:
        data = np.asarray(H)
    if not np.all(np.isfinite(data)) or not np.all(np.isfinite(v)):
        raise FloatingPointError("non-finite entries in operator or state")
    if check:
        check_hermitian(H)
    if t == 0 or (sp.issparse(H) and H.nnz == 0):
        return v.copy()

    n = H.shape[0]
    if n < DENSE_CUTOFF:
        Hd = H.toarray() if sp.issparse(H) else np.asarray(H, dtype=complex)
        w, U = la.eigh(Hd)
        return U @ (np.exp(-1j * w * t) * (U.conj().T @ v))

    # Remove the mean diagonal; it only contributes a global phase.
    shift = float(np.real(H.diagonal().mean()))
    Hs = H - shift * sp.identity(n, format="csc") if sp.issparse(H) else H - shift * np.eye(n)
    out = _lanczos_expm(Hs, v, t, tol, krylov_dim)
    return out * np.exp(-1j * shift * t)


def _lanczos_expm(H, v, t, tol, m):
    n = v.shape[0]
    m = min(m, n)
    total = abs(t)
    sign = np.sign(t)
    tau = total
    h_next = total
    w = v.copy()
    beta0 = np.linalg.norm(w)
    if beta0 == 0:
        return w
    while tau > 0:
        beta = np.linalg.norm(w)
        V = np.zeros((m + 1, n), dtype=complex)
        alpha = np.zeros(m)
        offd = np.zeros(m)
        V[0] = w / beta
        h = min(tau, h_next)
        coeffs = None
        for j in range(m):
            u = H @ V[j]
            alpha[j] = np.real(np.vdot(V[j], u))
            u = u - alpha[j] * V[j]
            if j > 0:
                u = u - offd[j - 1] * V[j - 1]
            # full reorthogonalization keeps the basis orthonormal at this size
            u = u - V[: j + 1].T @ (V[: j + 1].conj() @ u)
            offd[j] = np.linalg.norm(u)
            k = j + 1
            if offd[j] <= 1e-14 * max(1.0, abs(alpha[:k]).max()):
                # invariant subspace: the Krylov result is exact for any h
                h = tau
                coeffs = _TridiagExp(alpha[:k], offd[: k - 1])(sign * h)
                break
            V[j + 1] = u / offd[j]
            if k >= 4 and (k % 4 == 0 or k == m):
                c = _TridiagExp(alpha[:k], offd[: k - 1])(sign * h)
                if _accept(c[-1], beta * offd[j], tol * h / total * beta0):
                    coeffs = c
                    break
        if coeffs is None:
            k = m
            expT = _TridiagExp(alpha, offd[: m - 1])
            while True:
                coeffs = expT(sign * h)
                if _accept(coeffs[-1], beta * offd[m - 1], tol * h / total * beta0):
                    break
                h *= 0.5
                if h < 1e-12 * total:
                    raise FloatingPointError("Krylov step size underflow")
        w = beta * (V[: len(coeffs)].T @ coeffs)
        h_next = 2.0 * h
        tau = tau - h if h < tau * (1 - 1e-12) else 0.0
    return w


def _accept(c_last, scale, bound):
    # |c_last| at the eigh roundoff floor cannot be resolved further
    return scale * abs(c_last) <= bound or abs(c_last) <= _ROUNDOFF


class _TridiagExp:
    """First column of exp(-i T t) for a symmetric tridiagonal T."""

    def __init__(self, alpha, offd):
        if len(alpha) == 1:
            self.w, self.U = np.asarray(alpha, float), np.ones((1, 1))
        else:
            self.w, self.U = la.eigh_tridiagonal(alpha, offd)

    def __call__(self, t):
        return self.U @ (np.exp(-1j * self.w * t) * self.U[0])


def mode_operators(layout: SpaceLayout):
    """Embedded (a_j, Q_j, P_j) for every mode, in mode order."""
    ops = []
    for j, n in enumerate(layout.truncations):
        f = layout.mode_factor(j)
        ops.append((embed(annihilation(n), f, layout),
                    embed(position_q(n), f, layout),
                    embed(momentum_p(n), f, layout)))
    return ops


def top_level_population(state, layout: SpaceLayout) -> np.ndarray:
    """Population in the highest retained Fock level of each mode."""
    probs = np.abs(np.asarray(state).reshape(layout.shape)) ** 2
    out = np.empty(layout.n_modes)
    for j in range(layout.n_modes):
        moved = np.moveaxis(probs, j + 1, 0)
        out[j] = moved[-1].sum()
    return out


def warn_leakage(leakage, threshold: float = LEAKAGE_THRESHOLD) -> None:
    worst = float(np.max(leakage)) if np.size(leakage) else 0.0
    if worst > threshold:
        warnings.warn(
            f"top Fock level population {worst:.2e} exceeds {threshold:.0e}; "
            "consider a larger truncation",
            LeakageWarning,
            stacklevel=3,
        )
