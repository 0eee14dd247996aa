"""Mapping of vibronic models onto mixed qudit-boson (MQB) simulator parameters.

Covers the rotating-frame simulator Hamiltonian, drive-strength conversion
through Lamb-Dicke and Debye-Waller factors, scale-factor feasibility,
resource counts, and the laser-cooling parameters that emulate a thermal
bath.

Simulator parameters are kept in energy units (eV times the scale factor
``F``); divide by ``HBAR_EVS`` for angular frequencies in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import yaml
from scipy.optimize import brentq, minimize_scalar

from .constants import FS, HBAR_EVS, KB
from .models import VCModel
from .operators import (
    LayoutError,
    SpaceLayout,
    annihilation,
    embed,
    embed_product,
    number,
    qudit_projector,
)


class MappingError(ValueError):
    pass


class InfeasibleError(MappingError):
    """No parameter choice satisfies the requested constraints."""


class UnreachableTargetError(InfeasibleError):
    pass


class ValidityError(MappingError):
    """A solution exists only outside the regime where the model is valid."""


# -- roles --------------------------------------------------------------------

def auto_roles(model: VCModel, tol: float = 0.0) -> dict[str, tuple[int, ...]]:
    """Tuning if any diagonal linear coefficient is nonzero, coupling if any
    off-diagonal one is; a mode with neither is treated as tuning."""
    tuning, coupling = [], []
    off = ~np.eye(model.d, dtype=bool)
    for j in range(model.n_modes):
        diag = np.abs(np.diagonal(model.c1[j])) > tol
        offd = np.abs(model.c1[j][off]) > tol
        if offd.any():
            coupling.append(j)
        if diag.any() or not offd.any():
            tuning.append(j)
    return {"tuning": tuple(tuning), "coupling": tuple(coupling)}


def normalize_roles(model: VCModel, roles=None) -> dict[str, tuple[int, ...]]:
    """Validate a mode-role assignment.

    ``roles`` is ``{"tuning": [...], "coupling": [...]}`` or a per-mode mapping
    ``{j: "tuning" | "coupling" | "both"}``; ``None`` falls back to
    :func:`auto_roles`.
    """
    if roles is None:
        return auto_roles(model)
    if set(roles) <= {"tuning", "coupling"}:
        tuning = tuple(sorted(int(j) for j in roles.get("tuning", ()) or ()))
        coupling = tuple(sorted(int(j) for j in roles.get("coupling", ()) or ()))
    else:
        tuning, coupling = [], []
        for j, role in roles.items():
            if role in ("tuning", "both"):
                tuning.append(int(j))
            if role in ("coupling", "both"):
                coupling.append(int(j))
            if role not in ("tuning", "coupling", "both"):
                raise MappingError(f"unknown role {role!r} for mode {j}")
        tuning, coupling = tuple(sorted(tuning)), tuple(sorted(coupling))
    N = model.n_modes
    for j in tuning + coupling:
        if not 0 <= j < N:
            raise MappingError(f"role assigned to mode {j}, but the model has {N} modes")
    unassigned = sorted(set(range(N)) - set(tuning) - set(coupling))
    if unassigned:
        raise MappingError(f"modes {unassigned} have no role assigned")
    off = ~np.eye(model.d, dtype=bool)
    for j in range(N):
        if j not in tuning and np.any(np.diagonal(model.c1[j])):
            raise MappingError(f"mode {j} has diagonal couplings but is not a tuning mode")
        if j not in coupling and np.any(model.c1[j][off]):
            raise MappingError(f"mode {j} has off-diagonal couplings but is not a coupling mode")
    return {"tuning": tuning, "coupling": coupling}


# -- parameters and simulator Hamiltonian --------------------------------------

@dataclass(frozen=True)
class MQBParams:
    """Rotating-frame simulator parameters for a linear model.

    ``theta_prime[n, j]`` is the state-dependent drive on tuning mode ``j``;
    ``omega_prime[n, m, k]`` the interstate drive on coupling mode ``k``;
    ``chi[n]`` the static Stark shift entering as ``chi_n / 2 |n><n|``.
    """

    F: float
    delta: np.ndarray
    theta_prime: np.ndarray
    omega_prime: np.ndarray
    chi: np.ndarray
    tuning_set: tuple[int, ...]
    coupling_set: tuple[int, ...]
    phi: float = 0.0
    phi_M: float = 0.0
    phi_S: float = 0.0

    @property
    def d(self) -> int:
        return self.chi.shape[0]

    @property
    def n_modes(self) -> int:
        return self.delta.shape[0]

    @property
    def delta_chi(self) -> float:
        """chi_1 - chi_0 for a two-level qudit."""
        if self.d != 2:
            raise MappingError("delta_chi is defined for d=2")
        return float(self.chi[1] - self.chi[0])


def map_to_mqb(model: VCModel, F: float, roles=None) -> MQBParams:
    """Scale a linear model by ``F`` and split it into tuning/coupling drives."""
    if not F > 0:
        raise MappingError(f"scale factor must be positive, got {F}")
    if not model.is_linear:
        raise MappingError("only linear models map onto first-order MQB drives")
    off = ~np.eye(model.d, dtype=bool)
    if np.any(model.c0[off]):
        raise MappingError(
            "constant interstate couplings c0[n][m] (n != m) have no MQB drive; "
            "remove them with a coordinate displacement first"
        )
    r = normalize_roles(model, roles)
    d, N = model.d, model.n_modes
    theta = np.zeros((d, N))
    omega_p = np.zeros((d, d, N))
    for j in r["tuning"]:
        theta[:, j] = F * np.diagonal(model.c1[j]) / np.sqrt(2)
    for k in r["coupling"]:
        omega_p[:, :, k] = np.where(off, F * model.c1[k] / np.sqrt(2), 0.0)
    return MQBParams(
        F=float(F),
        delta=F * model.omega,
        theta_prime=theta,
        omega_prime=omega_p,
        chi=2 * F * np.diagonal(model.c0).copy(),
        tuning_set=r["tuning"],
        coupling_set=r["coupling"],
    )


def _check_params_layout(params: MQBParams, layout: SpaceLayout) -> None:
    if layout.d != params.d or layout.n_modes != params.n_modes:
        raise LayoutError(
            f"layout (d={layout.d}, N={layout.n_modes}) does not match "
            f"parameters (d={params.d}, N={params.n_modes})"
        )


def base_hamiltonian(params: MQBParams, layout: SpaceLayout) -> sp.csc_matrix:
    """Always-on part: sum of delta_j a_j^dag a_j."""
    _check_params_layout(params, layout)
    H = sp.csc_matrix((layout.dim, layout.dim), dtype=complex)
    for j, n in enumerate(layout.truncations):
        H = H + embed(params.delta[j] * number(n), layout.mode_factor(j), layout)
    return H.tocsc()


def stark_hamiltonian(params: MQBParams, layout: SpaceLayout, traceless: bool = False) -> sp.csc_matrix:
    """Static Stark term, 1/2 sum chi_n |n><n|.

    With ``traceless`` the mean shift is removed, which for ``d = 2`` gives
    ``-delta_chi sigma_z / 4``.
    """
    _check_params_layout(params, layout)
    chi = params.chi - params.chi.mean() if traceless else params.chi
    return embed(np.diag(chi / 2).astype(complex), 0, layout)


def _quadrature(n_max: int) -> sp.csc_matrix:
    a = annihilation(n_max)
    return (a + a.conj().T).tocsc()


def tuning_hamiltonian(params: MQBParams, layout: SpaceLayout, j: int) -> sp.csc_matrix:
    """sum_n Theta'_{n,j} |n><n| (a_j^dag + a_j)."""
    _check_params_layout(params, layout)
    diag = np.diag(params.theta_prime[:, j]).astype(complex)
    return embed_product(diag, {j: _quadrature(layout.truncations[j])}, layout)


def coupling_hamiltonian(params: MQBParams, layout: SpaceLayout, k: int) -> sp.csc_matrix:
    """sum_{n != m} Omega'_{n,m,k} |n><m| (a_k^dag + a_k)."""
    _check_params_layout(params, layout)
    mat = params.omega_prime[:, :, k].astype(complex)
    np.fill_diagonal(mat, 0)
    return embed_product(mat, {k: _quadrature(layout.truncations[k])}, layout)


def simulator_hamiltonian(params: MQBParams, layout: SpaceLayout, traceless_stark: bool = False) -> sp.csc_matrix:
    """Time-independent rotating-frame simulator Hamiltonian."""
    H = base_hamiltonian(params, layout) + stark_hamiltonian(params, layout, traceless_stark)
    for j in params.tuning_set:
        H = H + tuning_hamiltonian(params, layout, j)
    for k in params.coupling_set:
        H = H + coupling_hamiltonian(params, layout, k)
    return H.tocsc()


def dropped_constants(model: VCModel) -> tuple[float, float]:
    """(zero-point energy, mean electronic constant) removed by the mapping."""
    return float(model.omega.sum() / 2), float(np.trace(model.c0) / model.d)


# -- physical drive strengths -------------------------------------------------

@dataclass(frozen=True)
class HardwareSpec:
    """Simulator capabilities.

    Times in seconds, rates and frequencies in rad/s (``max_coupling``,
    ``omega_ion``, ``gamma_range``, ``omega0_range``).
    """

    eta: np.ndarray
    debye_waller: np.ndarray
    tau_d: float = 1e-3
    max_coupling: float = 2 * np.pi * 1e4
    dt_sim_min: float = 1e-6
    alpha: float = 0.4
    omega_ion: np.ndarray | None = None
    gamma_range: tuple[float, float] = (2 * np.pi * 1e5, 2 * np.pi * 2e7)
    omega0_range: tuple[float, float] | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "eta", np.atleast_1d(np.asarray(self.eta, float)))
        object.__setattr__(self, "debye_waller", np.atleast_1d(np.asarray(self.debye_waller, float)))
        if self.omega_ion is not None:
            object.__setattr__(self, "omega_ion", np.atleast_1d(np.asarray(self.omega_ion, float)))
        object.__setattr__(self, "gamma_range", tuple(float(g) for g in self.gamma_range))
        if self.omega0_range is not None:
            object.__setattr__(self, "omega0_range", tuple(float(g) for g in self.omega0_range))
        for name in ("tau_d", "max_coupling", "dt_sim_min"):
            if not getattr(self, name) > 0:
                raise MappingError(f"{name} must be positive")
        if not 0 < self.alpha <= 1:
            raise MappingError(f"alpha must lie in (0, 1], got {self.alpha}")
        lo, hi = self.gamma_range
        if not 0 < lo <= hi:
            raise MappingError(f"invalid gamma_range {self.gamma_range}")


def load_hardware(path) -> HardwareSpec:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    known = set(HardwareSpec.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise MappingError(f"unknown hardware fields: {sorted(unknown)}")
    for key in ("eta", "debye_waller"):
        if key not in data:
            raise MappingError(f"hardware file is missing '{key}'")
    return HardwareSpec(**data)


@dataclass(frozen=True)
class DriveStrengths:
    theta: np.ndarray  # (d, N): AC Stark drive per state and tuning mode
    omega: np.ndarray  # (d, d, N): base Rabi frequency per state pair and coupling mode
    phi: float = 0.0
    phi_M: float = 0.0
    phi_S: float = 0.0


def laser_drive_requirements(params: MQBParams, hw: HardwareSpec) -> DriveStrengths:
    """Undo the eta D'/2 reduction to obtain the physical drive strengths."""
    N = params.n_modes
    eta = np.broadcast_to(hw.eta, (N,)) if hw.eta.size in (1, N) else None
    dw = np.broadcast_to(hw.debye_waller, (N,)) if hw.debye_waller.size in (1, N) else None
    if eta is None or dw is None:
        raise MappingError(f"need one Lamb-Dicke and Debye-Waller factor per mode ({N})")
    factor = eta * dw
    if np.any(factor <= 0):
        raise MappingError("Lamb-Dicke and Debye-Waller factors must be positive")
    return DriveStrengths(
        theta=2 * params.theta_prime / factor[None, :],
        omega=2 * params.omega_prime / factor[None, None, :],
        phi=params.phi, phi_M=params.phi_M, phi_S=params.phi_S,
    )


# -- feasibility and resources -------------------------------------------------

@dataclass(frozen=True)
class ScaleBounds:
    F_min: float
    F_max1: float
    F_max2: float
    feasible: bool

    @property
    def recommended(self) -> float:
        return min(self.F_max1, self.F_max2)


def largest_coupling(model: VCModel) -> float:
    """Largest |coefficient| among the linear and quadratic terms (eV)."""
    return float(max(np.abs(model.c1).max(initial=0.0), np.abs(model.c2).max(initial=0.0)))


def scale_factor_bounds(t_max: float, hw: HardwareSpec, M: int, model: VCModel,
                        dt_mol: float) -> ScaleBounds:
    """Bounds on F for a run of ``t_max`` fs split into ``M`` Trotter parts.

    ``dt_mol`` is the largest acceptable molecular Trotter step (fs).
    """
    if not (t_max > 0 and dt_mol > 0):
        raise MappingError("t_max and dt_mol must be positive")
    if M < 1:
        raise MappingError(f"number of Trotter parts must be >= 1, got {M}")
    F_min = M * t_max * FS / hw.tau_d
    biggest = largest_coupling(model) / HBAR_EVS  # rad/s
    F_max1 = hw.max_coupling / biggest if biggest > 0 else math.inf
    F_max2 = dt_mol * FS / hw.dt_sim_min
    return ScaleBounds(F_min, F_max1, F_max2, min(F_max1, F_max2) >= F_min)


@dataclass(frozen=True)
class InteractionCount:
    formula: int
    actual: int


def interaction_count(model: VCModel, order: int) -> InteractionCount:
    """Dense-formula and actual number of order-``order`` interaction terms.

    Terms are counted once per unordered state pair ``n <= m`` and per ordered
    mode tuple.
    """
    if order not in (1, 2):
        raise MappingError(f"unsupported expansion order {order}")
    d, N = model.d, model.n_modes
    upper = np.triu(np.ones((d, d), dtype=bool))
    if order == 1:
        actual = int(np.count_nonzero(model.c1[:, upper]))
    else:
        actual = int(np.count_nonzero(model.c2[:, :, upper]))
    return InteractionCount(formula=N**order * d * (d + 1) // 2, actual=actual)


@dataclass(frozen=True)
class ResourceReport:
    n_modes: int
    d: int
    basis_size: int
    digital_qubits: int
    ions: int
    carrier_ions: int
    resonators: int
    classical_bytes: int
    notes: tuple[str, ...] = field(default=())

    @property
    def ions_with_carrier(self) -> int:
        return self.ions + self.carrier_ions

    def rows(self) -> list[tuple[str, str]]:
        return [
            ("modes", str(self.n_modes)),
            ("electronic_states", str(self.d)),
            ("basis_size", str(self.basis_size)),
            ("digital_qubits", str(self.digital_qubits)),
            ("trapped_ions", str(self.ions)),
            ("carrier_ions", str(self.carrier_ions)),
            ("resonators", str(self.resonators)),
            ("classical_memory_bytes", f"{float(self.classical_bytes):.6e}"),
        ]


def resource_estimate(N: int, d: int, basis_size: int = 20) -> ResourceReport:
    """Hardware counts for N modes and d electronic states.

    Digital: 8 qubits per mode plus ceil(log2 d) for the electronic register.
    Ion trap: 3 modes per ion. cQED: 20 modes per resonator. Conventional
    classical storage: one complex128 amplitude per basis function.
    """
    if N < 1 or d < 2 or basis_size < 1:
        raise MappingError("need N >= 1, d >= 2 and basis_size >= 1")
    return ResourceReport(
        n_modes=N,
        d=d,
        basis_size=basis_size,
        digital_qubits=8 * N + math.ceil(math.log2(d)),
        ions=-(-N // 3),
        carrier_ions=1,
        resonators=-(-N // 20),
        classical_bytes=16 * d * basis_size**N,
        notes=("carrier_ions counts a separate qudit host; it is zero when a mode-hosting "
               "ion also carries the qudit",),
    )


# -- thermal occupations and laser cooling --------------------------------------

def bose_einstein(omega: float, T: float) -> float:
    """Mean thermal occupation for a mode of energy ``omega`` (eV) at ``T`` (K)."""
    if not omega > 0:
        raise MappingError(f"mode energy must be positive, got {omega}")
    if T < 0:
        raise MappingError(f"temperature must be >= 0, got {T}")
    if T == 0:
        return 0.0
    x = omega / (KB * T)
    if x > 700.0:  # expm1 would overflow; the occupation is exp(-x) to double precision
        return math.exp(-x)
    return float(1.0 / math.expm1(x))


def simulator_temperature(T: float, F: float) -> float:
    """Temperature giving the same occupations after scaling frequencies by F."""
    return F * T


def cooling_rates(delta, Gamma, Omega0, eta, omega_ion, alpha=0.4):
    """Sideband cooling (A-) and heating (A+) rates."""
    def B(x):
        return Omega0**2 / (Gamma**2 + 4 * x**2)

    a_minus = eta**2 * Gamma * (B(delta - omega_ion) + alpha * B(delta))
    a_plus = eta**2 * Gamma * (B(delta + omega_ion) + alpha * B(delta))
    return a_minus, a_plus


def cooling_occupation(delta, Gamma, omega_ion, alpha=0.4):
    """Steady-state occupation A+/(A- - A+); independent of eta and Omega0."""
    a_minus, a_plus = cooling_rates(delta, Gamma, 1.0, 1.0, omega_ion, alpha)
    return a_plus / (a_minus - a_plus)


@dataclass(frozen=True)
class CoolingSolution:
    delta: float
    Gamma: float
    Omega0: float
    A_minus: float
    A_plus: float

    @property
    def gamma(self) -> float:
        return self.A_minus - self.A_plus

    @property
    def nbar(self) -> float:
        return self.A_plus / (self.A_minus - self.A_plus)


MAX_OMEGA0_RATIO = 0.1


def _solve_delta(target_nbar, Gamma, omega_ion, alpha):
    """Detuning on the branch 0 < delta < delta_opt reaching ``target_nbar``."""
    def nbar(x):
        return cooling_occupation(x, Gamma, omega_ion, alpha)

    upper = omega_ion + 10 * Gamma
    opt = minimize_scalar(nbar, bounds=(1e-9 * omega_ion, upper), method="bounded",
                          options={"xatol": 1e-12 * upper})
    delta_opt, nbar_min = opt.x, opt.fun
    if nbar_min > target_nbar:
        return None
    lo = delta_opt
    while nbar(lo) < target_nbar:
        lo *= 0.5
        if lo < 1e-15 * omega_ion:
            return None
    return brentq(lambda x: nbar(x) - target_nbar, lo, delta_opt, xtol=1e-14 * delta_opt,
                  rtol=1e-13, maxiter=500)


def solve_cooling_params(target_gamma: float, target_nbar: float, hw: HardwareSpec,
                         mode: int = 0, n_gamma: int = 41) -> CoolingSolution:
    """Laser parameters (detuning, linewidth, carrier Rabi frequency) emulating
    a bath with rate ``target_gamma`` and occupation ``target_nbar``.

    The occupation fixes the detuning for each candidate linewidth; the rate
    then fixes the Rabi frequency, since both rates scale as its square. The
    candidate with the smallest Omega0/Gamma is returned.
    """
    if target_nbar <= 0:
        raise UnreachableTargetError("a zero occupation is never reached by laser cooling")
    if target_gamma <= 0:
        raise MappingError(f"target rate must be positive, got {target_gamma}")
    if hw.omega_ion is None:
        raise MappingError("hardware spec needs omega_ion for laser cooling")
    omega_ion = float(hw.omega_ion[mode] if hw.omega_ion.size > 1 else hw.omega_ion[0])
    eta = float(hw.eta[mode] if hw.eta.size > 1 else hw.eta[0])
    lo, hi = hw.gamma_range
    gammas = [lo] if lo == hi else np.geomspace(lo, hi, n_gamma)

    best = None
    reached = False
    for Gamma in gammas:
        delta = _solve_delta(target_nbar, Gamma, omega_ion, hw.alpha)
        if delta is None:
            continue
        reached = True
        a_minus, a_plus = cooling_rates(delta, Gamma, 1.0, eta, omega_ion, hw.alpha)
        Omega0 = math.sqrt(target_gamma / (a_minus - a_plus))
        if Omega0 / Gamma > MAX_OMEGA0_RATIO:
            continue
        if hw.omega0_range is not None and not hw.omega0_range[0] <= Omega0 <= hw.omega0_range[1]:
            continue
        if best is None or Omega0 / Gamma < best.Omega0 / best.Gamma:
            am, ap = cooling_rates(delta, Gamma, Omega0, eta, omega_ion, hw.alpha)
            best = CoolingSolution(float(delta), float(Gamma), Omega0, float(am), float(ap))
    if best is None:
        if not reached:
            raise InfeasibleError(
                f"occupation {target_nbar:g} is below the minimum reachable in the linewidth range"
            )
        raise ValidityError(
            f"rate {target_gamma:g} needs Omega0/Gamma > {MAX_OMEGA0_RATIO} for every linewidth"
        )
    return best
