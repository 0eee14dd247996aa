"""Pure-state propagation: exact evolution and analog Trotterization.

Hamiltonians are in eV and times in fs; propagators are exp(-i H t / hbar).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .constants import HBAR
from .mapping import (
    MQBParams,
    base_hamiltonian,
    coupling_hamiltonian,
    stark_hamiltonian,
    tuning_hamiltonian,
)
from .operators import (
    LEAKAGE_THRESHOLD,
    LayoutError,
    SpaceLayout,
    check_hermitian,
    expm_apply,
    mode_operators,
    top_level_population,
    warn_leakage,
)

DENSE_STEP_CUTOFF = 512
SCHEMES = ("rescaling", "rewinding")


class TrotterError(ValueError):
    pass


@dataclass
class Trajectory:
    """Observables on a time grid (fs).

    ``populations`` is (T, d); ``q_expect``, ``p_expect`` and ``leakage`` are
    (T, N). ``fidelity`` is filled when a reference evolution was run.
    """

    times: np.ndarray
    populations: np.ndarray
    q_expect: np.ndarray
    p_expect: np.ndarray
    leakage: np.ndarray
    fidelity: np.ndarray | None = None
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)
    reference: Trajectory | None = None
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.populations.shape[1]

    @property
    def n_modes(self) -> int:
        return self.q_expect.shape[1]


class Observables:
    """Populations, <Q_j>, <P_j> and top-level leakage of a state."""

    def __init__(self, layout: SpaceLayout):
        self.layout = layout
        ops = mode_operators(layout)
        self.q = [o[1] for o in ops]
        self.p = [o[2] for o in ops]

    def __call__(self, psi):
        probs = np.abs(psi.reshape(self.layout.shape)) ** 2
        pops = probs.reshape(self.layout.d, -1).sum(axis=1)
        q = np.array([np.real(np.vdot(psi, op @ psi)) for op in self.q])
        p = np.array([np.real(np.vdot(psi, op @ psi)) for op in self.p])
        return pops, q, p, top_level_population(psi, self.layout)


class _Recorder:
    def __init__(self, layout, n, snapshot_times=()):
        self.obs = Observables(layout)
        self.times = np.zeros(n)
        self.pops = np.zeros((n, layout.d))
        self.q = np.zeros((n, layout.n_modes))
        self.p = np.zeros((n, layout.n_modes))
        self.leak = np.zeros((n, layout.n_modes))
        self.snap_targets = sorted(float(s) for s in snapshot_times)
        self.snapshots = {}

    def record(self, i, t, psi):
        self.times[i] = t
        self.pops[i], self.q[i], self.p[i], self.leak[i] = self.obs(psi)
        for s in self.snap_targets:
            if abs(s - t) <= 1e-9 * max(1.0, abs(t)):
                self.snapshots[s] = psi.copy()

    def trajectory(self, leakage_threshold=LEAKAGE_THRESHOLD, **kw):
        warn_leakage(self.leak, leakage_threshold)
        return Trajectory(self.times, self.pops, self.q, self.p, self.leak,
                          snapshots=self.snapshots, **kw)


def _prepare_state(psi0, dim):
    psi = np.asarray(psi0, dtype=complex).ravel()
    if psi.shape[0] != dim:
        raise LayoutError(f"state dimension {psi.shape[0]} does not match {dim}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > 1e-6:
        raise ValueError(f"initial state is not normalized (norm {norm:.8f})")
    if abs(norm - 1) > 1e-12:
        warnings.warn(f"renormalizing initial state (norm {norm:.10f})", stacklevel=3)
        psi = psi / norm
    return psi


class StepPropagator:
    """exp(-i H dt / hbar) applied repeatedly for a fixed dt.

    Diagonal generators use exact phases, small ones a cached dense unitary,
    and large ones Lanczos on every application.
    """

    def __init__(self, H, dt: float, tol: float = 1e-10):
        self.H = sp.csc_matrix(H)
        self.t = dt / HBAR
        self.tol = tol
        offdiag = self.H - sp.diags(self.H.diagonal())
        self.phases = None
        self.U = None
        if offdiag.count_nonzero() == 0:
            self.phases = np.exp(-1j * self.H.diagonal() * self.t)
        elif self.H.shape[0] <= DENSE_STEP_CUTOFF:
            w, V = la.eigh(self.H.toarray())
            self.U = (V * np.exp(-1j * w * self.t)) @ V.conj().T

    def __call__(self, psi):
        if self.phases is not None:
            return self.phases * psi
        if self.U is not None:
            return self.U @ psi
        return expm_apply(self.H, psi, self.t, tol=self.tol, check=False)


def propagate_exact(H, psi0, times, layout: SpaceLayout, tol: float = 1e-10,
                    snapshot_times=(), leakage_threshold: float = LEAKAGE_THRESHOLD) -> Trajectory:
    """Evolve ``psi0`` under ``H`` and record observables at ``times`` (fs)."""
    H = sp.csc_matrix(H)
    check_hermitian(H)
    psi = _prepare_state(psi0, H.shape[0])
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be a non-empty ascending grid starting at t >= 0")
    rec = _Recorder(layout, times.size, snapshot_times)
    t_prev = 0.0
    for i, t in enumerate(times):
        if t > t_prev:
            psi = expm_apply(H, psi, (t - t_prev) / HBAR, tol=tol, check=False)
        rec.record(i, t, psi)
        t_prev = t
    return rec.trajectory(leakage_threshold)


@dataclass
class TrotterPlan:
    """Always-on base ``H0`` plus switchable parts, applied with step ``dt`` (fs)."""

    H0: sp.csc_matrix
    parts: list
    scheme: str = "rescaling"
    dt: float = 0.5

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise TrotterError(f"unknown Trotter scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.dt > 0:
            raise TrotterError(f"Trotter step must be positive, got {self.dt}")
        if len(self.parts) < 1:
            raise TrotterError("a Trotter plan needs at least one part")
        self.H0 = sp.csc_matrix(self.H0)
        self.parts = [sp.csc_matrix(h) for h in self.parts]
        for h in self.parts:
            if h.shape != self.H0.shape:
                raise TrotterError("all Trotter parts must share the base Hamiltonian's shape")

    @property
    def M(self) -> int:
        return len(self.parts)

    def total(self) -> sp.csc_matrix:
        H = self.H0.copy()
        for h in self.parts:
            H = H + h
        return H.tocsc()

    def with_dt(self, dt: float) -> TrotterPlan:
        return TrotterPlan(self.H0, list(self.parts), self.scheme, dt)

    def with_scheme(self, scheme: str) -> TrotterPlan:
        return TrotterPlan(self.H0, list(self.parts), scheme, self.dt)

    def step_factors(self, tol: float = 1e-10) -> list[StepPropagator]:
        """Propagators in application order (rightmost factor first)."""
        dt, M = self.dt, self.M
        if self.scheme == "rescaling":
            return [StepPropagator(self.H0 / M + h, dt, tol) for h in self.parts]
        # The leading exp(-i H0 dt) cancels the first rewind, so each step is
        # exp(-i(H0+H_M)dt) e^{+i H0 dt} ... e^{+i H0 dt} exp(-i(H0+H_1)dt).
        rewind = StepPropagator(-self.H0, dt, tol)
        out = []
        for k, h in enumerate(self.parts):
            out.append(StepPropagator(self.H0 + h, dt, tol))
            if k < M - 1:
                out.append(rewind)
        return out


def mqb_trotter_plan(params: MQBParams, layout: SpaceLayout, scheme: str = "rescaling",
                     dt: float = 0.5, stark_weights=None) -> TrotterPlan:
    """One part per mode (its tuning and/or coupling drive) with the traceless
    Stark term shared between parts according to ``stark_weights`` (equal by
    default)."""
    modes = sorted(set(params.tuning_set) | set(params.coupling_set))
    if stark_weights is None:
        stark_weights = np.full(len(modes), 1.0 / len(modes))
    stark_weights = np.asarray(stark_weights, dtype=float)
    if stark_weights.shape != (len(modes),) or not np.isclose(stark_weights.sum(), 1.0):
        raise TrotterError("Stark weights must have one entry per part and sum to 1")
    stark = stark_hamiltonian(params, layout, traceless=True)
    parts = []
    for w, j in zip(stark_weights, modes):
        h = w * stark
        if j in params.tuning_set:
            h = h + tuning_hamiltonian(params, layout, j)
        if j in params.coupling_set:
            h = h + coupling_hamiltonian(params, layout, j)
        parts.append(h.tocsc())
    return TrotterPlan(base_hamiltonian(params, layout), parts, scheme, dt)


def _n_steps(t_final: float, dt: float) -> int:
    n = int(round(t_final / dt))
    if n < 1 or abs(n * dt - t_final) > 1e-9 * max(1.0, abs(t_final)):
        raise TrotterError(f"t_final={t_final} is not an integer multiple of dt={dt}")
    return n


def propagate_trotter(plan: TrotterPlan, psi0, t_final: float, layout: SpaceLayout,
                      reference: bool = False, tol: float = 1e-10, snapshot_times=(),
                      leakage_threshold: float = LEAKAGE_THRESHOLD) -> Trajectory:
    """Apply the plan's Trotter step until ``t_final`` (fs), recording after
    every step. With ``reference`` the exact evolution under the summed
    Hamiltonian runs alongside and fills ``fidelity`` and ``reference``."""
    H = plan.total()
    check_hermitian(H)
    n = _n_steps(t_final, plan.dt)
    psi = _prepare_state(psi0, H.shape[0])
    factors = plan.step_factors(tol)
    rec = _Recorder(layout, n + 1, snapshot_times)
    rec.record(0, 0.0, psi)
    if reference:
        exact_step = StepPropagator(H, plan.dt, tol)
        ref_rec = _Recorder(layout, n + 1)
        ref_rec.record(0, 0.0, psi)
        phi = psi.copy()
        fid = np.ones(n + 1)
    for i in range(1, n + 1):
        for f in factors:
            psi = f(psi)
        t = i * plan.dt
        rec.record(i, t, psi)
        if reference:
            phi = exact_step(phi)
            ref_rec.record(i, t, phi)
            fid[i] = fidelity(psi, phi)
    if reference:
        return rec.trajectory(leakage_threshold, fidelity=fid,
                              reference=ref_rec.trajectory(leakage_threshold))
    return rec.trajectory(leakage_threshold)


def fidelity(psi_a, psi_b) -> float:
    """Squared overlap |<a|b>|^2."""
    a, b = np.asarray(psi_a).ravel(), np.asarray(psi_b).ravel()
    if a.shape != b.shape:
        raise LayoutError(f"state dimensions differ: {a.shape} vs {b.shape}")
    return float(min(abs(np.vdot(a, b)) ** 2, 1.0))


@dataclass
class ScanRow:
    dt: float
    max_pop_error: float
    min_fidelity: float


@dataclass
class ScanResult:
    rows: list[ScanRow]
    fitted_order: float

    def as_table(self):
        return [(r.dt, r.max_pop_error, r.min_fidelity, self.fitted_order) for r in self.rows]


INFIDELITY_FLOOR = 1e-13


def fit_order(dts, infidelities) -> float:
    """Least-squares slope of log(infidelity) against log(dt); NaN when all
    infidelities sit at the numerical floor."""
    dts = np.asarray(dts, float)
    inf = np.asarray(infidelities, float)
    mask = inf > INFIDELITY_FLOOR
    if mask.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(dts[mask]), np.log(inf[mask]), 1)[0])


def trotter_error_scan(plan: TrotterPlan, dt_list, t_final: float, psi0,
                       layout: SpaceLayout, tol: float = 1e-10) -> ScanResult:
    """Trotter error against exact evolution for each step in ``dt_list``."""
    dts = sorted(float(dt) for dt in dt_list)
    if len(dts) < 3 or dts[-1] / dts[0] < 10 * (1 - 1e-12):
        raise TrotterError("need at least 3 step sizes spanning one decade")
    rows = []
    for dt in dts:
        traj = propagate_trotter(plan.with_dt(dt), psi0, t_final, layout, reference=True,
                                 tol=tol, leakage_threshold=np.inf)
        err = float(np.max(np.abs(traj.populations - traj.reference.populations)))
        rows.append(ScanRow(dt, err, float(traj.fidelity.min())))
    order = fit_order([r.dt for r in rows], [1 - r.min_fidelity for r in rows])
    return ScanResult(rows, order)


@dataclass
class SchemeComparison:
    times: np.ndarray
    fidelity_rescaling: np.ndarray
    fidelity_rewinding: np.ndarray
    rescaling: Trajectory
    rewinding: Trajectory

    @property
    def max_difference(self) -> float:
        return float(np.max(np.abs(self.fidelity_rescaling - self.fidelity_rewinding)))


def _same_partition(a: TrotterPlan, b: TrotterPlan) -> bool:
    if a.M != b.M or abs(a.dt - b.dt) > 1e-12 * a.dt:
        return False
    pairs = [(a.H0, b.H0)] + list(zip(a.parts, b.parts))
    return all((x - y).count_nonzero() == 0 for x, y in pairs)


def compare_schemes(plan_res: TrotterPlan, plan_rew: TrotterPlan, psi0, t_final: float,
                    layout: SpaceLayout, tol: float = 1e-10) -> SchemeComparison:
    if plan_res.scheme != "rescaling" or plan_rew.scheme != "rewinding":
        raise TrotterError("expected one rescaling and one rewinding plan")
    if not _same_partition(plan_res, plan_rew):
        raise TrotterError("plans must share dt, base Hamiltonian and parts")
    res = propagate_trotter(plan_res, psi0, t_final, layout, reference=True, tol=tol)
    rew = propagate_trotter(plan_rew, psi0, t_final, layout, reference=True, tol=tol)
    return SchemeComparison(res.times, res.fidelity, rew.fidelity, res, rew)
