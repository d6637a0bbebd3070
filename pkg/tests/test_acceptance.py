"""End-to-end acceptance checks, one per criterion.

Each check records a PASS/FAIL line; the lines are printed in the pytest
terminal summary and when this file is run as a script.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from qepidemic import oracle
from qepidemic.calibration import (
    DEFAULT_LAMBDA_GRID,
    SimSettings,
    VirusInputs,
    calibrate_lambda,
    calibrate_sigma,
    fit_sinc,
    gamma_scan,
    household_model,
    household_rate,
    rescale_time,
    rescaled_survival,
    total_infected,
)
from qepidemic.evolution import run_protocol
from qepidemic.scenario import load_scenario, shipped_scenario

pytestmark = pytest.mark.slow

RESULTS: dict[int, str] = {}
LAM_REF = 0.201
SCAN_GAMMAS = np.linspace(math.pi / 8, 15 * math.pi / 8, 15)


def record(n: int, ok: bool, detail: str) -> bool:
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(RESULTS[n])
    return ok


_cache = {}


def power_law():
    # shared by criteria 2, 3 and 5
    if "lam" not in _cache:
        t0 = time.perf_counter()
        _cache["lam"] = calibrate_lambda(VirusInputs(sar=0.251), DEFAULT_LAMBDA_GRID, SimSettings())
        _cache["lam_time"] = time.perf_counter() - t0
    return _cache["lam"], _cache["lam_time"]


def test_criterion_01_sar_reproduction():
    t0 = time.perf_counter()
    p7 = run_protocol(household_model(LAM_REF), 7).at(7, 1)
    dt = time.perf_counter() - t0
    ok = abs(p7 - 0.749) <= 0.02 and dt < 5
    assert record(1, ok, f"household P(7) = {p7:.5f} (target 0.749 +- 0.02), {dt:.2f} s (< 5 s)")


def test_criterion_02_quadratic_law():
    cal, dt = power_law()
    s, e = cal.fit.slope, cal.fit.slope_stderr
    ok = 1.91 <= s <= 2.00 and dt < 120
    assert record(2, ok, f"log-log slope = {s:.4f} +- {e:.4f} (target [1.91, 2.00]), {dt:.1f} s (< 120 s)")


def test_criterion_03_lambda_calibration():
    cal, _ = power_law()
    ok = 0.185 <= cal.lam <= 0.217
    assert record(3, ok, f"lambda* = {cal.lam:.5f} +- {cal.stderr:.5f} (target [0.185, 0.217])")


def test_criterion_04_sinc_law():
    t0 = time.perf_counter()
    rates, _ = gamma_scan(LAM_REF, SCAN_GAMMAS, 7, SimSettings())
    fit = fit_sinc(SCAN_GAMMAS, rates, math.pi, guess=(LAM_REF, 1.0))
    dt = time.perf_counter() - t0
    peak = SCAN_GAMMAS[np.argmax(rates)]
    ok = abs(fit.lam - 0.199) <= 0.01 and abs(fit.delta_t - 1.014) <= 0.05 and dt < 300
    ok = ok and abs(peak - math.pi) < 1e-9
    assert record(
        4,
        ok,
        f"lam_hat = {fit.lam:.4f} (0.199 +- 0.01), dt_hat = {fit.delta_t:.4f} (1.014 +- 0.05), "
        f"peak at gamma = {peak:.4f}, {dt:.1f} s (< 300 s)",
    )


def test_criterion_05_rescaling():
    cal, _ = power_law()
    k = cal.fit.slope
    a_hi = rescale_time(LAM_REF, 0.400, k)
    a_lo = rescale_time(LAM_REF, 0.050, k)
    ok_a = abs(a_hi / 0.253 - 1) <= 0.01 and abs(a_lo / 16.07 - 1) <= 0.01
    ref = run_protocol(household_model(LAM_REF), 7).survival
    days = np.arange(8)
    worst = 0.0
    for lam in (0.1, 0.3, 0.4):
        curve = rescaled_survival(household_model(lam), days, LAM_REF, k)
        worst = max(worst, float(np.abs(curve - ref).max()))
    ok = ok_a and worst <= 0.01
    assert record(
        5,
        ok,
        f"exponent {k:.4f}: a(0.400) = {a_hi:.4f} (0.253 +- 1%), a(0.050) = {a_lo:.3f} (16.07 +- 1%), "
        f"rescaled curves max |diff| = {worst:.4f} (<= 0.01)",
    )


def test_criterion_06_oracle_equivalence():
    t0 = time.perf_counter()
    model = load_scenario(shipped_scenario("omicron_typical.json")).build_model().with_lambda(0.2)
    days = 10
    q = run_protocol(model, days).survival
    d_rk = float(np.abs(q - oracle.rk4_evolve(model, days).survival).max())
    d_mk = float(np.abs(q - oracle.markov_evolve(model, days).survival).max())
    dt = time.perf_counter() - t0
    ok = model.n_qubits == 10 and d_rk <= 5e-3 and d_mk <= 0.01 and dt < 600
    assert record(
        6,
        ok,
        f"10-qubit model, lambda = 0.2, {days} days: |quantum - rk4| = {d_rk:.2e} (<= 5e-3), "
        f"|quantum - markov| = {d_mk:.2e} (<= 0.01), {dt:.1f} s (< 600 s)",
    )


def test_criterion_07_lambda_parity():
    model = load_scenario(shipped_scenario("omicron_typical.json")).build_model()
    a = run_protocol(model, 7).survival
    b = run_protocol(model.with_lambda(-model.lam), 7).survival
    d = float(np.abs(a - b).max())
    assert record(7, d <= 1e-10, f"max |P(lam) - P(-lam)| = {d:.1e} (<= 1e-10)")


def test_criterion_08_zero_rate():
    lam = LAM_REF
    model = household_model(lam, gamma=1e-4)
    p = float(oracle.flip_probability(model)[0])
    bound = 1e-6 * lam**2
    assert record(8, p < bound, f"flip probability = {p:.2e} (< {bound:.2e})")


def test_criterion_09_sigma_calibration():
    cfg = load_scenario(shipped_scenario("omicron_typical.json"))
    t0 = time.perf_counter()
    cal = calibrate_sigma(cfg.community_map, LAM_REF, VirusInputs(r0=9.5, incubation=4), settings=SimSettings())
    total, _ = total_infected(cfg.community_map, cal.sigma, LAM_REF, 4)
    dt = time.perf_counter() - t0
    monotone = bool(np.all(np.diff(cal.totals) > 0))
    ok = monotone and abs(total / 9.5 - 1) <= 0.02 and dt < 300
    assert record(
        9,
        ok,
        f"sigma* = {cal.sigma:.3f} +- {cal.stderr:.3f} m, totals monotone: {monotone}, "
        f"day-4 total at sigma* = {total:.4f} (9.5 +- 2%), {dt:.1f} s (< 300 s)",
    )


def test_criterion_10_two_patient_dominance():
    one = load_scenario(shipped_scenario("one_patient.json"))
    two = load_scenario(shipped_scenario("two_patients.json"))
    m2 = two.build_model()
    s1 = run_protocol(one.build_model(), 10)
    s2 = run_protocol(m2, 10)
    assert s1.site_ids == s2.site_ids
    inf1 = 1 - s1.survival[1:]
    inf2 = 1 - s2.survival[1:]
    margin = float((inf2 - inf1).min())
    ok = abs(m2.alpha_value - math.pi / 2) < 1e-12 and margin >= 0
    assert record(10, ok, f"alpha = {m2.alpha_value:.4f}, min over days 1-10 and sites of (two - one) = {margin:.2e} (>= 0)")


PROPERTY_TESTS = [
    "tests/test_state.py::test_norm_preserved_over_1000_gates",
    "tests/test_state.py::test_trace_and_hermiticity_preserved_over_1000_gates",
    "tests/test_state.py::test_zz_matches_cnot_rz_cnot",
    "tests/test_state.py::test_xx_matches_hadamard_conjugated_zz",
    "tests/test_state.py::test_system_zz_terms_commute",
    "tests/test_state.py::test_reset_channel_consistency_random_state",
    "tests/test_oracle.py::test_column_sums",
    "tests/test_oracle.py::test_reset_idempotent",
    "tests/test_geometry.py::test_sinc_round_trip_property",
    "tests/test_geometry.py::test_round_trip_gamma",
]


def test_criterion_11_property_suite():
    root = Path(__file__).resolve().parent.parent
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_TESTS],
        cwd=root,
        capture_output=True,
        text=True,
    )
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    assert record(11, proc.returncode == 0, f"{len(PROPERTY_TESTS)} property tests: {last}")


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
