"""Acceptance criteria, one check per numbered criterion.

Each check returns ``(passed, detail)``. Under pytest the outcome is also
recorded and printed as one PASS/FAIL line per criterion in the terminal
summary; running this file directly prints the same lines.

Two criteria cannot hold as written and are marked strict xfail, so they
show up as failures in the report without turning the suite red:

* 5: the reference expansion places its minus signs on input label 11, but
  the circuit puts them on output label 11 (companion test below checks
  the moved signs).
* 9: at x_d = 1 the window needs y near 10, not 8, to push F_{p,y} past
  0.9999, because 1 - F_{p,y} decays like exp(-x_d y).
"""

import math
import subprocess
import sys

import numpy as np
import pytest
from scipy.special import erfc

from conftest import ACCEPTANCE, qubit_vector
from qubus.fidelity import (
    choi_input_csign,
    csign_fidelity_closed,
    csign_postselected_closed,
    erfc_bounds,
    process_fidelity_mc,
    rep_fidelity_closed,
    rep_postselected_closed,
    teleport_fidelity_closed,
    teleport_postselected_closed,
)
from qubus.fock_oracle import DENSITY_TOL, STATE_TOL, run_equivalence_suite
from qubus.hybrid_state import PLUS, HybridState, ProtocolParams, add_qubit, normalize
from qubus.measurement import correction_phase, position_amplitude
from qubus.protocols import (
    OutcomeSource,
    csign_gate,
    csign_pre_correction,
    ghz_prepare,
    ideal_csign_resource,
    prepare_csign_resource,
    single_qubit_gate,
    teleport_qubus_to_qubit,
    universal_set_tally,
)

THETA = 0.1
MC_TRIALS = 100_000
MC_POINTS = (1.0, 2.5, 5.0)
MC_PROTOCOLS = ("teleport", "csign", "repetition")


def record(key: int, passed: bool, detail: str):
    ACCEPTANCE.setdefault(str(key), []).append((bool(passed), detail))
    print(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")


# -- 1 ------------------------------------------------------------------------


def check_worked_example():
    p0, f0 = teleport_postselected_closed(2.5, 0.0)
    p1, f1 = teleport_postselected_closed(2.5, 1.25)
    ok = abs(f0 - 0.8944) <= 5e-4 and abs(f1 - 0.9877) <= 5e-4 and abs(p1 - 0.5062) <= 5e-4
    return ok, f"F(2.5,0)={f0:.5f} F(2.5,1.25)={f1:.5f} P(2.5,1.25)={p1:.5f}"


# -- 2 ------------------------------------------------------------------------


def check_identities():
    xd, y = np.meshgrid(np.linspace(0, 6, 10), np.linspace(0, 3, 10))
    fp = teleport_fidelity_closed(xd)
    p, fy = teleport_postselected_closed(xd, y)
    pc, fc = csign_postselected_closed(xd, y)
    devs = [
        np.abs(csign_fidelity_closed(xd) - fp**2).max(),
        np.abs(fc - fy**2).max(),
        np.abs(pc - p**2).max(),
    ]
    for n in (1, 2, 3, 9):
        pr, fr = rep_postselected_closed(n, xd, y)
        devs += [
            np.abs(rep_fidelity_closed(n, xd) - fp**n).max(),
            np.abs(fr - fy**n).max(),
            np.abs(pr - p**n).max(),
        ]
    worst = float(max(devs))
    return worst < 1e-12, f"max deviation {worst:.2e}"


# -- 3 ------------------------------------------------------------------------


def mc_params(x_d: float) -> ProtocolParams:
    return ProtocolParams(x_d / (2 * (1 - math.cos(THETA))), THETA)


def check_monte_carlo(protocol: str, x_d: float, n_trials: int = MC_TRIALS):
    rep = process_fidelity_mc(protocol, mc_params(x_d), n_trials, seed=2024, n=3)
    dev = abs(rep.monte_carlo - rep.analytic)
    ok = dev < 3 * rep.mc_stderr and rep.mc_stderr <= 0.002
    return ok, (
        f"{protocol} x_d={x_d}: MC={rep.monte_carlo:.5f} analytic={rep.analytic:.5f} "
        f"sigma={rep.mc_stderr:.5f} |dev|/sigma={dev / rep.mc_stderr:.2f}"
    )


# -- 4 ------------------------------------------------------------------------


def check_conditional_state():
    p = ProtocolParams(3.0, 0.7)
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
        n = math.hypot(abs(a), abs(b))
        a, b = a / n, b / n
        x = rng.uniform(2 * p.alpha * math.cos(p.theta) - 2, 2 * p.alpha + 2)
        bus = HybridState.from_branches([(a, [], [p.alpha]), (b, [], [p.alpha * np.exp(1j * p.theta)])])
        s = add_qubit(normalize(bus), PLUS)
        run = teleport_qubus_to_qubit(s, 0, 0, p, OutcomeSource(x=[x]), correct=False)
        f_a = position_amplitude(x, p.alpha).real
        f_c = position_amplitude(x, p.alpha * math.cos(p.theta)).real
        ph = correction_phase(x, p)
        psi = f_a * np.array([a, b]) + f_c * np.array([np.exp(1j * ph) * b, np.exp(-1j * ph) * a])
        psi /= np.linalg.norm(psi)
        got = qubit_vector(run.state)
        got /= np.linalg.norm(got)
        phase = np.vdot(psi, got)
        worst = max(worst, float(np.abs(got - phase / abs(phase) * psi).max()))
    return worst < 1e-10, f"max component error {worst:.2e} over 20 draws"


# -- 5 ------------------------------------------------------------------------


def csign_reference(x, xp, p, minus_on="input"):
    """Expansion of the CSIGN pre-correction state over |input bits>|output bits>.

    ``minus_on="input"`` puts the minus signs on the terms whose input label
    is 11 (the reference layout); ``"output"`` puts them on output label 11.
    """

    def f_a(u):
        return abs(position_amplitude(u, p.alpha))

    def f_c(u):
        return abs(position_amplitude(u, p.alpha * np.exp(1j * p.theta)))

    ph, php = correction_phase(x, p), correction_phase(xp, p)
    e = np.exp
    A, B = f_a(x) * f_a(xp), f_a(x) * f_c(xp)
    C, D = f_c(x) * f_a(xp), f_c(x) * f_c(xp)
    terms = [
        (A, "00", "00"), (A, "01", "01"), (A, "10", "10"), (-A, "11", "11"),
        (B * e(-1j * php), "00", "01"), (B * e(-1j * php), "10", "11"),
        (B * e(1j * php), "01", "00"), (-B * e(1j * php), "11", "10"),
        (C * e(-1j * ph), "00", "10"), (C * e(-1j * ph), "01", "11"),
        (C * e(1j * ph), "10", "00"), (-C * e(1j * ph), "11", "01"),
        (D * e(-1j * (ph + php)), "00", "11"), (D * e(1j * (php - ph)), "01", "10"),
        (D * e(1j * (ph - php)), "10", "01"), (-D * e(1j * (ph + php)), "11", "00"),
    ]
    v = np.zeros(16, dtype=complex)
    for c, i, o in terms:
        if minus_on == "output":
            c = c * (-1 if i == "11" else 1) * (-1 if o == "11" else 1)
        v[int(i + o, 2)] += c
    return v


def check_csign_expansion(minus_on="input"):
    p = ProtocolParams(2.0, 0.6)
    rng = np.random.default_rng(15)
    worst = 0.0
    for _ in range(10):
        x, xp = rng.uniform(p.x_0 - 3, p.x_0 + 3, size=2)
        run, _ = csign_pre_correction(
            choi_input_csign(p), 0, 1, ideal_csign_resource(), p, OutcomeSource(x=[x, xp])
        )
        got = qubit_vector(run.state)
        got /= np.linalg.norm(got)
        ref = csign_reference(x, xp, p, minus_on)
        ref /= np.linalg.norm(ref)
        phase = np.vdot(ref, got)
        phase = phase / abs(phase) if abs(phase) > 0 else 1.0
        worst = max(worst, float(np.abs(got - phase * ref).max()))
    return worst < 1e-10, f"minus signs on {minus_on} label 11: max term error {worst:.2e} over 10 pairs"


# -- 6 ------------------------------------------------------------------------


def check_oracle():
    report = run_equivalence_suite(2.0, 0.6, 40)
    states = [c.error for c in report.checks if not c.name.startswith("density")]
    ok = report.passed and report.max_density_error < DENSITY_TOL and max(states) < STATE_TOL
    return ok, (
        f"{len(report.checks)} checks, density err {report.max_density_error:.2e}, "
        f"state err {max(states):.2e}"
    )


# -- 7 ------------------------------------------------------------------------


def check_tallies():
    p = ProtocolParams.from_xd(8.0, 0.3)
    rng = np.random.default_rng(7)
    single = single_qubit_gate(HybridState.product(modes=[p.alpha]), 0, np.eye(2), p, rng).tally
    resource = prepare_csign_resource(p, rng)
    pair = HybridState.product(modes=[p.alpha, p.alpha])
    gate_only = csign_gate(pair, 0, 1, ideal_csign_resource(), p, rng).tally
    with_resource = csign_gate(pair, 0, 1, resource, p, rng).tally
    universal = universal_set_tally(p)["universal"]
    ghz = [ghz_prepare(n, p, rng).tally for n in range(1, 7)]
    ok = (
        single.controlled_rotations == 2
        and resource.tally.controlled_rotations == 3
        and gate_only.controlled_rotations == 4
        and with_resource.controlled_rotations == 7
        and universal.controlled_rotations == 9
        and all(
            t.controlled_rotations == n + 1 and t.homodyne_detections == n
            for n, t in enumerate(ghz, start=1)
        )
    )
    ghz_txt = ",".join(f"{t.controlled_rotations}/{t.homodyne_detections}" for t in ghz)
    return ok, (
        f"single={single.controlled_rotations} csign={resource.tally.controlled_rotations}+"
        f"{gate_only.controlled_rotations}={with_resource.controlled_rotations} "
        f"universal={universal.controlled_rotations} ghz N=1..6 rotations/homodynes={ghz_txt}"
    )


# -- 8 ------------------------------------------------------------------------


def check_erfc_sandwich():
    z = np.arange(0.5, 8.01, 0.5)
    lo, hi = erfc_bounds(z)
    ref = erfc(z)
    ok = bool(np.all(lo < ref) and np.all(ref < hi))
    gap = float(np.min(np.minimum(ref - lo, hi - ref) / ref))
    return ok, f"z=0.5..8 step 0.5, smallest relative margin {gap:.2e}"


# -- 9 ------------------------------------------------------------------------


def check_limits():
    _, f8 = teleport_postselected_closed(1.0, 8.0)
    envelope_ok = True
    parts = []
    for y in (2.0, 4.0, 6.0):
        z1, z2 = (2 * y - 1.0) / math.sqrt(8), (2 * y + 1.0) / math.sqrt(8)
        env = 0.5 * (erfc_bounds(z1)[1] + erfc_bounds(z2)[1])
        prob = teleport_postselected_closed(1.0, y)[0]
        envelope_ok &= prob < env
        parts.append(f"P({y:g})={prob:.3e}<{env:.3e}")
    ok = f8 > 0.9999 and envelope_ok
    return ok, f"F(1,8)={f8:.6f} (needs >0.9999); envelope {'holds' if envelope_ok else 'broken'}: " + " ".join(parts)


# -- 10 -----------------------------------------------------------------------


def simulate_bytes(n_trials: int) -> bytes:
    p = mc_params(2.5)
    cmd = [
        sys.executable, "-m", "qubus", "simulate", "--protocol", "teleport",
        "--alpha", repr(p.alpha), "--theta", repr(THETA), "--trials", str(n_trials),
        "--seed", "10", "--format", "json",
    ]
    return subprocess.run(cmd, capture_output=True, check=True).stdout


def check_determinism(n_trials: int = MC_TRIALS):
    first, second = simulate_bytes(n_trials), simulate_bytes(n_trials)
    return first == second, f"{len(first)} bytes, identical={first == second}"


# -- pytest -------------------------------------------------------------------


def test_criterion_1_worked_example():
    ok, detail = check_worked_example()
    record(1, ok, detail)
    assert ok, detail


def test_criterion_2_closed_form_identities():
    ok, detail = check_identities()
    record(2, ok, detail)
    assert ok, detail


@pytest.mark.slow
@pytest.mark.parametrize("protocol", MC_PROTOCOLS)
@pytest.mark.parametrize("x_d", MC_POINTS)
def test_criterion_3_monte_carlo(protocol, x_d):
    ok, detail = check_monte_carlo(protocol, x_d)
    record(3, ok, detail)
    assert ok, detail


def test_criterion_4_conditional_state():
    ok, detail = check_conditional_state()
    record(4, ok, detail)
    assert ok, detail


@pytest.mark.xfail(strict=True, reason="reference puts the minus signs on input label 11; the circuit puts them on output 11")
def test_criterion_5_csign_expansion():
    ok, detail = check_csign_expansion("input")
    record(5, ok, detail)
    assert ok, detail


def test_csign_expansion_with_moved_signs():
    ok, detail = check_csign_expansion("output")
    assert ok, detail


def test_criterion_6_oracle_equivalence():
    ok, detail = check_oracle()
    record(6, ok, detail)
    assert ok, detail


def test_criterion_7_resource_tallies():
    ok, detail = check_tallies()
    record(7, ok, detail)
    assert ok, detail


def test_criterion_8_erfc_sandwich():
    ok, detail = check_erfc_sandwich()
    record(8, ok, detail)
    assert ok, detail


@pytest.mark.xfail(strict=True, reason="F_{p,8} at x_d = 1 is 0.99970, below 0.9999")
def test_criterion_9_limits():
    ok, detail = check_limits()
    record(9, ok, detail)
    assert ok, detail


@pytest.mark.slow
def test_criterion_10_determinism():
    ok, detail = check_determinism()
    record(10, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    checks = [
        (1, check_worked_example),
        (2, check_identities),
        *[(3, lambda pr=pr, xd=xd: check_monte_carlo(pr, xd)) for xd in MC_POINTS for pr in MC_PROTOCOLS],
        (4, check_conditional_state),
        (5, check_csign_expansion),
        (6, check_oracle),
        (7, check_tallies),
        (8, check_erfc_sandwich),
        (9, check_limits),
        (10, check_determinism),
    ]
    for key, fn in checks:
        record(key, *fn())
