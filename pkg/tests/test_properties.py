"""Property-based checks of the structural invariants."""

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from mqbsim.closed import mqb_trotter_plan, propagate_exact, trotter_error_scan
from mqbsim.mapping import (
    HardwareSpec,
    bose_einstein,
    cooling_rates,
    dropped_constants,
    interaction_count,
    map_to_mqb,
    simulator_hamiltonian,
    solve_cooling_params,
)
from mqbsim.models import (
    VCModel,
    build_hamiltonian,
    displace_model,
    displace_state,
    from_pauli_form,
    initial_state,
    pauli_form,
    pyrazine_model,
    random_lvc_model,
)
from mqbsim.open import BathSpec, lindblad_rhs, propagate_lindblad, thermal_state
from mqbsim.operators import (
    SpaceLayout,
    annihilation,
    embed,
    expm_apply,
    hermiticity_error,
    momentum_p,
    number,
    position_q,
)

PROFILE = settings(max_examples=25, deadline=None,
                   suppress_health_check=[HealthCheck.too_slow])

seeds = st.integers(0, 2**32 - 1)


def lvc(seed, d, N, diag_c0=True):
    m = random_lvc_model(np.random.default_rng(seed), d, N)
    if diag_c0:
        m = VCModel(m.omega, np.diag(np.diagonal(m.c0)), m.c1)
    return m


class TestOperatorAlgebra:
    @PROFILE
    @given(n=st.integers(2, 12))
    def test_commutator_only_top_level(self, n):
        a = annihilation(n).toarray()
        dev = a @ a.conj().T - a.conj().T @ a - np.eye(n)
        dev[-1, -1] = 0
        assert np.max(np.abs(dev)) < 1e-13

    @PROFILE
    @given(c=st.lists(st.floats(-5, 5), min_size=3, max_size=3), n=st.integers(2, 6))
    def test_real_combinations_stay_hermitian(self, c, n):
        lay = SpaceLayout(2, (n, n))
        H = (c[0] * embed(position_q(n), 1, lay) + c[1] * embed(momentum_p(n), 2, lay)
             + c[2] * embed(number(n), 2, lay))
        assert hermiticity_error(H) <= 1e-15

    @PROFILE
    @given(n1=st.integers(2, 5), n2=st.integers(2, 5))
    def test_embedded_factors_commute_exactly(self, n1, n2):
        lay = SpaceLayout(3, (n1, n2))
        A = embed(position_q(n1), 1, lay)
        B = embed(momentum_p(n2), 2, lay)
        C = (A @ B - B @ A)
        assert C.count_nonzero() == 0

    @PROFILE
    @given(seed=seeds, t=st.floats(0.01, 200.0), n=st.integers(20, 150))
    def test_exponential_preserves_norm(self, seed, t, n):
        rng = np.random.default_rng(seed)
        A = sp.random(n, n, density=0.05, random_state=rng) * rng.uniform(0.1, 5)
        H = ((A + A.T) / 2).tocsc() * (1 + 0j)
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        v /= np.linalg.norm(v)
        assert abs(np.linalg.norm(expm_apply(H, v, t)) - 1) <= 1e-9


class TestModels:
    @PROFILE
    @given(seed=seeds, d=st.integers(1, 3), N=st.integers(1, 3), quad=st.booleans())
    def test_hamiltonian_hermitian(self, seed, d, N, quad):
        rng = np.random.default_rng(seed)
        m = random_lvc_model(rng, d, N)
        if quad:
            c2 = rng.normal(size=(N, N, d, d)) * 0.01
            c2 = c2 + c2.transpose(1, 0, 2, 3)
            c2 = c2 + c2.transpose(0, 1, 3, 2)
            m = VCModel(m.omega, m.c0, m.c1, c2)
        H = build_hamiltonian(m, m.layout(4))
        assert hermiticity_error(H) <= 1e-12

    @PROFILE
    @given(seed=seeds, N=st.integers(1, 4))
    def test_pauli_roundtrip_on_traceless_part(self, seed, N):
        m = lvc(seed, 2, N, diag_c0=False)
        back = from_pauli_form(pauli_form(m), m.omega)
        c0_traceless = m.c0 - np.trace(m.c0) / 2 * np.eye(2)
        np.testing.assert_allclose(back.c1, m.c1, rtol=0, atol=1e-15)
        np.testing.assert_allclose(back.c0, c0_traceless, atol=1e-15)

    @PROFILE
    @given(d=st.integers(2, 4), N=st.integers(1, 4), order=st.sampled_from([1, 2]),
           seed=seeds)
    def test_full_models_hit_formula(self, d, N, order, seed):
        rng = np.random.default_rng(seed)
        c1 = rng.uniform(0.1, 1, size=(N, d, d))
        c1 = c1 + c1.transpose(0, 2, 1)
        c2 = None
        if order == 2:
            c2 = rng.uniform(0.1, 1, size=(N, N, d, d))
            c2 = c2 + c2.transpose(1, 0, 2, 3)
            c2 = c2 + c2.transpose(0, 1, 3, 2)
        m = VCModel(rng.uniform(0.05, 0.2, N), np.eye(d), c1, c2)
        c = interaction_count(m, order)
        assert c.actual == c.formula == N**order * d * (d + 1) // 2


class TestMapping:
    @PROFILE
    @given(seed=seeds, d=st.integers(2, 3), N=st.integers(1, 3),
           F=st.sampled_from([1e-9, 1e-6, 1e-3, 1.0]))
    def test_reconstruction_identity(self, seed, d, N, F):
        m = lvc(seed, d, N)
        lay = m.layout(3)
        zp, _ = dropped_constants(m)
        ref = F * (build_hamiltonian(m, lay).toarray() - zp * np.eye(lay.dim))
        H = simulator_hamiltonian(map_to_mqb(m, F), lay).toarray()
        assert np.max(np.abs(H - ref)) <= 1e-12

    @PROFILE
    @given(seed=seeds, F=st.sampled_from([1e-9, 1e-3, 1.0]))
    def test_spectrum_scales(self, seed, F):
        m = lvc(seed, 2, 2)
        lay = m.layout(4)
        zp, _ = dropped_constants(m)
        e_mol = np.linalg.eigvalsh(build_hamiltonian(m, lay).toarray()) - zp
        e_sim = np.linalg.eigvalsh(simulator_hamiltonian(map_to_mqb(m, F), lay).toarray())
        np.testing.assert_allclose(e_sim / F, e_mol, rtol=1e-10, atol=1e-12)

    @PROFILE
    @given(w=st.floats(1e-3, 1.0), T=st.floats(1.0, 2000.0), s=st.floats(1e-9, 1e3))
    def test_occupation_scale_invariant(self, w, T, s):
        assert bose_einstein(s * w, s * T) == pytest.approx(bose_einstein(w, T), rel=1e-9)

    @settings(max_examples=15, deadline=None)
    @given(lg=st.floats(-7, -5.5), ln=st.floats(-3, np.log10(0.2)))
    def test_cooling_right_inverse(self, lg, ln):
        hw = HardwareSpec(eta=[0.1], debye_waller=[1.0], omega_ion=[1.0],
                          gamma_range=(0.01, 1.0))
        g, n = 10**lg, 10**ln
        s = solve_cooling_params(g, n, hw)
        am, ap = cooling_rates(s.delta, s.Gamma, s.Omega0, 0.1, 1.0, 0.4)
        assert am - ap == pytest.approx(g, rel=1e-6)
        assert ap / (am - ap) == pytest.approx(n, rel=1e-6)
        assert s.Omega0 / s.Gamma <= 0.1


class TestClosedDynamics:
    @PROFILE
    @given(seed=seeds, dt=st.floats(0.05, 2.0), scheme=st.sampled_from(["rescaling", "rewinding"]))
    def test_trotter_step_unitary(self, seed, dt, scheme):
        m = lvc(seed, 2, 2)
        lay = m.layout(5)
        plan = mqb_trotter_plan(map_to_mqb(m, 1.0), lay, scheme, dt)
        psi = initial_state(lay, 1)
        for f in plan.step_factors():
            psi = f(psi)
        assert abs(np.linalg.norm(psi) - 1) <= 1e-9

    @PROFILE
    @given(seed=seeds, F=st.sampled_from([1e-9, 1e-3, 0.5]))
    def test_slow_motion_equivalence(self, seed, F):
        # propagating F H for t / F is the same exponent as H for t
        m = lvc(seed, 2, 2)
        lay = m.layout(5)
        H = build_hamiltonian(m, lay)
        psi = initial_state(lay, 1)
        a = propagate_exact(H, psi, [0.0, 20.0], lay)
        b = propagate_exact(F * H, psi, [0.0, 20.0 / F], lay)
        np.testing.assert_allclose(a.populations, b.populations, atol=1e-9)

    def test_population_error_below_infidelity(self):
        m = pyrazine_model()
        lay = m.layout(8)
        res = trotter_error_scan(mqb_trotter_plan(map_to_mqb(m, 1.0), lay),
                                 [0.05, 0.1, 0.25, 0.5], 60.0, initial_state(lay, 1), lay)
        for row in res.rows:
            # populations differ by at most the trace distance sqrt(1 - F)
            assert row.max_pop_error <= np.sqrt(1 - row.min_fidelity)

    @PROFILE
    @given(seed=seeds)
    def test_displacement_equivalence(self, seed):
        m = random_lvc_model(np.random.default_rng(seed), 2, 2, scale=0.03)
        beta = 0.3
        lay = m.layout(14)
        psi = initial_state(lay, 1)
        t = np.linspace(0, 20, 5)
        a = propagate_exact(build_hamiltonian(m, lay), psi, t, lay, tol=1e-12)
        b = propagate_exact(build_hamiltonian(displace_model(m, 0, beta), lay),
                            displace_state(psi, 0, beta, lay), t, lay, tol=1e-12)
        np.testing.assert_allclose(a.populations, b.populations, atol=1e-6)


class TestOpenDynamics:
    @PROFILE
    @given(nbar=st.lists(st.floats(0, 3), min_size=2, max_size=2),
           gamma=st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=2))
    def test_thermal_fixed_point(self, nbar, gamma):
        lay = SpaceLayout(1, (8, 6))
        H = embed(0.1 * number(8), 1, lay) + embed(0.07 * number(6), 2, lay)
        rho = thermal_state(lay, nbar, electronic=0)
        r = lindblad_rhs(rho, H, BathSpec(gamma, nbar), lay)
        assert np.max(np.abs(r)) <= 1e-9

    @PROFILE
    @given(seed=seeds, nbar=st.floats(0, 1))
    def test_rhs_traceless_hermitian(self, seed, nbar):
        m = lvc(seed, 2, 2)
        lay = m.layout(3)
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(lay.dim, lay.dim)) + 1j * rng.normal(size=(lay.dim, lay.dim))
        rho = X @ X.conj().T
        rho /= np.trace(rho)
        r = lindblad_rhs(rho, build_hamiltonian(m, lay), BathSpec([0.05, 0.02], nbar), lay)
        assert abs(np.trace(r)) < 1e-13
        assert np.max(np.abs(r - r.conj().T)) < 1e-13

    def test_purity_falls_over_first_period(self):
        m = pyrazine_model()
        lay = m.layout(5)
        period = 2 * np.pi * 0.6582119569 / m.omega[0]
        t = np.linspace(0, period, 15)
        traj = propagate_lindblad(initial_state(lay, 1), build_hamiltonian(m, lay),
                                  BathSpec([0.02, 0.02], [0.1, 0.1]), t, lay)
        assert np.all(np.diff(traj.extra["purity"]) < 0)
        assert np.max(np.abs(traj.extra["trace_error"])) <= 1e-7
        assert np.max(traj.extra["hermiticity_error"]) <= 1e-9
