import math

import numpy as np
import pytest
import scipy.linalg

from qepidemic import oracle
from qepidemic import state as qs
from qepidemic.errors import ConfigurationError, EngineRefusal, ModelError
from qepidemic.evolution import (
    TrotterStep,
    run_protocol,
    run_protocol_reference,
    trotter_interval,
)
from qepidemic.model import (
    BATH_ZZ,
    COUPLING_XX,
    SYSTEM_ZZ,
    EpidemicModel,
    auto_alpha,
    build_terms,
    configuration_energy,
)
from qepidemic.timeseries import extract_infection_rate


def household(lam=0.201, gamma=math.pi, **kw):
    return EpidemicModel(gamma=[[gamma]], lam=lam, **kw)


def test_term_counts():
    # |I||S| system + (|I|+|S|) coupling + |I||S| bath terms
    assert len(build_terms(household())) == 4
    assert len(build_terms(EpidemicModel(gamma=np.ones((1, 4)), lam=0.1))) == 13
    assert len(build_terms(EpidemicModel(gamma=np.ones((2, 3)), lam=0.1))) == 17


def test_term_order_and_coefficients():
    m = EpidemicModel(gamma=[[1.0, 2.0], [3.0, 0.5]], lam=0.2, alpha=1.5)
    terms = build_terms(m)
    kinds = [t.kind for t in terms]
    assert kinds == [SYSTEM_ZZ] * 4 + [COUPLING_XX] * 4 + [BATH_ZZ] * 4
    assert [t.coefficient for t in terms[:4]] == [-1.0, -2.0, -3.0, -0.5]
    assert [t.qubits for t in terms[:4]] == [(0, 2), (0, 3), (1, 2), (1, 3)]
    assert all(t.coefficient == -0.2 for t in terms[4:8])
    assert [t.qubits for t in terms[4:8]] == [(k, k + 4) for k in range(4)]
    assert all(t.coefficient == -1.5 for t in terms[8:])
    assert [t.qubits for t in terms[8:]] == [(4, 6), (4, 7), (5, 6), (5, 7)]


def test_negative_gamma_rejected():
    with pytest.raises(ModelError):
        EpidemicModel(gamma=[[-0.1]], lam=0.2)


def test_bath_interval_must_match():
    with pytest.raises(ConfigurationError):
        household(bath_delta_t=2.0)


def test_auto_alpha():
    assert auto_alpha(1, 1.0) == math.pi
    assert auto_alpha(2, 1.0) == math.pi / 2
    assert auto_alpha(1, 2.0) == math.pi / 2
    assert EpidemicModel(gamma=np.ones((2, 1)), lam=0.1).alpha_value == math.pi / 2


def test_configuration_energy():
    m = household(gamma=1.3)
    assert configuration_energy(m, [1], [0]) == pytest.approx(1.3)
    assert configuration_energy(m, [0], [0]) == pytest.approx(-1.3)


def test_trotter_lambda_zero_basis_state_is_phase():
    m = EpidemicModel(gamma=[[1.1, 2.2]], lam=0.0)
    s = qs.init_basis_state(6, "100000")
    out = trotter_interval(s, build_terms(m), 1.0, 0.01)
    assert abs(abs(np.vdot(s.data, out.data)) - 1.0) < 1e-12


def test_trotter_non_divisible_rejected():
    m = household()
    with pytest.raises(ConfigurationError):
        trotter_interval(qs.init_basis_state(4, "1000"), build_terms(m), 1.0, 0.03)


def test_run_protocol_non_multiple_rejected():
    with pytest.raises(ConfigurationError):
        run_protocol(household(delta_t=2.0, trotter_dt=0.01), 7)


def test_trotter_step_matches_gate_sequence():
    m = EpidemicModel(gamma=[[1.0, 0.4]], lam=0.3)
    terms = build_terms(m)
    s = qs.random_state(6, np.random.default_rng(0))
    fast = TrotterStep(terms, 6, 0.05).apply(s.data)
    slow = s
    for t in terms:
        theta = 2 * t.coefficient * 0.05
        if t.kind == COUPLING_XX:
            slow = qs.apply_xx_rotation(slow, *t.qubits, theta)
        else:
            slow = qs.apply_zz_rotation(slow, *t.qubits, theta)
    assert np.abs(fast - slow.data).max() < 1e-13


def test_trotter_first_order_convergence_to_expm():
    m = EpidemicModel(gamma=[[2.0]], lam=0.3)
    h = oracle.hamiltonian_matrix(m)
    s = qs.random_state(4, np.random.default_rng(3))
    exact = scipy.linalg.expm(-1j * h) @ s.data
    errs = []
    for dt in (0.02, 0.01, 0.005):
        out = trotter_interval(s, build_terms(m), 1.0, dt)
        errs.append(np.linalg.norm(out.data - exact))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_trotter_density_matches_pure():
    m = EpidemicModel(gamma=[[2.0]], lam=0.3)
    s = qs.random_state(4, np.random.default_rng(8))
    a = trotter_interval(s, build_terms(m), 1.0, 0.01).to_density()
    b = trotter_interval(s.to_density(), build_terms(m), 1.0, 0.01)
    assert np.abs(a.data - b.data).max() < 1e-12


def test_trotter_step_halving():
    a = run_protocol(household(trotter_dt=0.01), 1).survival[1, 0]
    b = run_protocol(household(trotter_dt=0.005), 1).survival[1, 0]
    assert abs(a - b) < 1e-3


def test_trotter_matches_rk4_on_random_input():
    m = EpidemicModel(gamma=[[2.5]], lam=0.201)
    rho = qs.random_state(4, np.random.default_rng(12), qs.DENSITY, rank=2)
    a = trotter_interval(rho, build_terms(m), 1.0, 0.01)
    b = qs.QuantumState(qs.DENSITY, 4, oracle.rk4_propagate(m, rho.data, 1.0))
    for q in range(4):
        assert abs(qs.expect_z(a, q) - qs.expect_z(b, q)) < 5e-3


def test_lambda_zero_survival_is_one():
    m = EpidemicModel(gamma=[[math.pi, 1.0, 0.3]], lam=0.0)
    s = run_protocol(m, 7)
    assert np.all(s.survival == 1.0)


def test_initial_survival_and_bounds():
    s = run_protocol(EpidemicModel(gamma=[[math.pi, 1.0]], lam=0.3), 7)
    assert np.all(s.survival[0] == 1.0)
    assert np.all((s.survival >= 0) & (s.survival <= 1))
    assert np.all(s.stderr == 0)


def test_household_day7_reproduces_sar():
    s = run_protocol(household(), 7)
    assert s.at(7, 1) == pytest.approx(0.749, abs=0.02)


def test_reduced_runner_matches_full_density_reference():
    m = EpidemicModel(gamma=[[math.pi, 1.0], [0.4, 2.0]], lam=0.25)
    a = run_protocol(m, 3)
    b = run_protocol_reference(m, 3)
    assert np.abs(a.survival - b.survival).max() < 1e-12


def test_lattice_size_independence():
    rng = np.random.default_rng(2022)
    others = rng.uniform(0, math.pi, 3)
    others[others == 0] = math.pi
    small = run_protocol(household(), 7)
    big = run_protocol(EpidemicModel(gamma=[[math.pi, *others]], lam=0.201), 7)
    assert np.abs(small.survival[:, 0] - big.survival[:, 0]).max() < 1e-3
    r_small = extract_infection_rate(small, 1)
    r_big = extract_infection_rate(big, 1)
    assert abs(r_small.rate - r_big.rate) < 4 * max(r_small.stderr, r_big.stderr, 1e-6) + 1e-4


def test_household_rate_near_lambda_squared():
    fit = extract_infection_rate(run_protocol(household(), 7), 1)
    assert fit.rate == pytest.approx(0.201**2, rel=0.10)


def test_lambda_parity_exact():
    m = EpidemicModel(gamma=[[math.pi, 1.7, 0.6]], lam=0.27)
    a = run_protocol(m, 7)
    b = run_protocol(m.with_lambda(-0.27), 7)
    assert np.abs(a.survival - b.survival).max() <= 1e-10


@pytest.mark.parametrize("c", [2, 4])
def test_quadratic_scaling_small_lambda(c):
    lam = 0.025
    g1 = extract_infection_rate(run_protocol(household(lam), 7), 1).rate
    g2 = extract_infection_rate(run_protocol(household(c * lam), 7), 1).rate
    assert g2 / g1 == pytest.approx(c * c, rel=0.05)


def test_pruned_site_stays_healthy():
    m = EpidemicModel(gamma=[[math.pi, 0.0, 1e-8]], lam=0.3)
    s = run_protocol(m, 5)
    assert np.all(s.survival[:, 1:] == 1.0)
    ref = run_protocol(household(0.3), 5)
    assert np.abs(s.survival[:, 0] - ref.survival[:, 0]).max() < 1e-12


def test_shots_mode_statistics_and_reproducibility():
    m = household()
    exact = run_protocol(m, 7).survival
    a = run_protocol(m, 7, "shots", 4096, seed=5)
    b = run_protocol(m, 7, "shots", 4096, seed=5)
    assert np.array_equal(a.survival, b.survival)
    assert a.shots == 4096
    err = np.sqrt(exact * (1 - exact) / 4096)
    assert np.all(np.abs(a.survival - exact) <= 4 * err + 1e-12)
    assert np.all(a.survival[0] == 1.0)


def test_shots_converge_as_inverse_sqrt():
    m = household()
    exact = run_protocol(m, 7).survival[1:, 0]
    rms = []
    for shots in (1000, 16000):
        devs = [run_protocol(m, 7, "shots", shots, seed=s).survival[1:, 0] - exact for s in range(12)]
        rms.append(np.sqrt(np.mean(np.square(devs))))
    assert rms[0] / rms[1] == pytest.approx(4.0, rel=0.35)


def test_trajectory_mode_agrees_with_density():
    m = EpidemicModel(gamma=[[math.pi, 1.5]], lam=0.3)
    exact = run_protocol(m, 3).survival
    traj = run_protocol(m, 3, "trajectories", 3000, seed=2)
    err = np.sqrt(exact * (1 - exact) / 3000)
    assert np.all(np.abs(traj.survival - exact) <= 4 * err + 1e-12)


def test_density_engine_refuses_large_systems():
    m = EpidemicModel(gamma=np.ones((1, 6)), lam=0.1)
    with pytest.raises(EngineRefusal) as exc:
        run_protocol(m, 1)
    assert exc.value.n_qubits == 14


def test_unknown_mode_rejected():
    with pytest.raises(ConfigurationError):
        run_protocol(household(), 7, mode="exact")
