import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import qubit_vector
from qubus.fock_oracle import embed, fock_homodyne_density, fock_position_amplitude
from qubus.hybrid_state import (
    PLUS,
    HybridState,
    ProtocolParams,
    add_qubit,
    apply_controlled_rotation,
    coherent_overlap,
    fidelity,
    normalize,
)
from qubus.measurement import (
    HomodyneRecord,
    condition_on_x,
    correction_phase,
    density_at,
    homodyne_density,
    homodyne_measure,
    measure_qubit,
    position_amplitude,
    postselect,
)


def teleport_pre_state(params, a=1 / math.sqrt(2), b=1 / math.sqrt(2)):
    """(a|alpha> + b|alpha e^{i theta}>)|+> after the -theta controlled rotation."""
    al = params.alpha
    bus = HybridState.from_branches([(a, [], [al]), (b, [], [al * np.exp(1j * params.theta)])])
    return apply_controlled_rotation(add_qubit(normalize(bus), PLUS), 0, 0, -params.theta)


class TestPositionAmplitude:
    def test_peak_real_alpha(self):
        assert position_amplitude(4.0, 2.0) == pytest.approx((2 * np.pi) ** -0.25, abs=1e-15)

    @given(st.floats(-4, 4), st.floats(-4, 4))
    def test_unit_normalized(self, re, im):
        x = np.linspace(2 * re - 15, 2 * re + 15, 6001)
        p = np.abs(position_amplitude(x, complex(re, im))) ** 2
        assert np.trapezoid(p, x) == pytest.approx(1.0, abs=1e-10)

    def test_rotated_modulus_is_shifted_gaussian(self):
        a, t = 3.0, 0.4
        x = np.linspace(-5, 15, 50)
        lhs = np.abs(position_amplitude(x, a * np.exp(1j * t)))
        assert np.allclose(lhs, position_amplitude(x, a * math.cos(t)).real, atol=1e-15)

    def test_against_hermite_expansion(self):
        beta = 2 * np.exp(0.7j)
        assert abs(position_amplitude(1.0, beta) - fock_position_amplitude(1.0, beta, 80)) < 1e-8

    def test_correction_phase_is_derived_from_amplitude(self):
        p = ProtocolParams(3.0, 0.5)
        x = np.linspace(0, 8, 9)
        expected = p.alpha * x * math.sin(p.theta) - p.alpha**2 * math.sin(2 * p.theta) / 2
        assert np.allclose(np.exp(1j * correction_phase(x, p)), np.exp(1j * expected), atol=1e-12)


class TestQubitMeasurement:
    def test_plus_z_probabilities(self):
        s = HybridState.product(qubits=[PLUS])
        for outcome in (0, 1):
            _, _, p = measure_qubit(s, 0, "Z", outcome=outcome)
            assert p == pytest.approx(0.5)

    def test_x_measure_teleports(self):
        a, b, al, t = 0.6, 0.8j, 1.2, 0.9
        s = HybridState.from_branches([(a, [0], [al]), (b, [1], [al * np.exp(1j * t)])])
        for outcome, sign in ((0, 1), (1, -1)):
            _, out, _ = measure_qubit(s, 0, "X", outcome=outcome, remove=True)
            target = normalize(
                HybridState.from_branches([(a, [], [al]), (sign * b, [], [al * np.exp(1j * t)])])
            )
            assert fidelity(out, target) == pytest.approx(1.0, abs=1e-12)

    def test_x_measure_keeps_qubit_in_eigenstate(self):
        s = HybridState.product(qubits=[[0.6, 0.8]])
        _, out, p = measure_qubit(s, 0, "X", outcome=1)
        assert p == pytest.approx((0.6 - 0.8) ** 2 / 2)
        assert np.allclose(np.abs(qubit_vector(out)), [1 / math.sqrt(2)] * 2)

    def test_impossible_outcome_rejected(self):
        with pytest.raises(ValueError):
            measure_qubit(HybridState.product(qubits=[[1, 0]]), 0, "Z", outcome=1)

    def test_bad_basis(self):
        with pytest.raises(ValueError):
            measure_qubit(HybridState.product(qubits=[PLUS]), 0, "Y", outcome=0)

    def test_sampling_frequencies(self, rng):
        s = HybridState.product(qubits=[[0.6, 0.8]])
        ones = sum(measure_qubit(s, 0, "Z", rng=rng)[0] for _ in range(4000))
        assert abs(ones / 4000 - 0.64) < 4 * math.sqrt(0.64 * 0.36 / 4000)


class TestHomodyneDensity:
    def test_single_coherent_state(self):
        d = homodyne_density(HybridState.product(modes=[1.5]), 0)
        mean = np.trapezoid(d.grid * d.density, d.grid)
        var = np.trapezoid((d.grid - mean) ** 2 * d.density, d.grid)
        assert mean == pytest.approx(3.0, abs=1e-9)
        assert var == pytest.approx(1.0, abs=1e-8)

    def test_teleport_mixture_normalized(self):
        p = ProtocolParams(40.0, 0.3)
        d = homodyne_density(teleport_pre_state(p), 0)
        assert d.total == pytest.approx(1.0, abs=1e-8)
        assert d.cumulative[-1] == pytest.approx(1.0, abs=1e-15)
        assert np.all(np.diff(d.cumulative) >= 0)
        # two peaks near 2 alpha and 2 alpha cos theta
        for m in (2 * p.alpha, 2 * p.alpha * math.cos(p.theta)):
            assert density_at(teleport_pre_state(p), 0, m)[0] > 0.05

    def test_cat_matches_fock_oracle(self):
        cat = normalize(HybridState.from_branches([(1, [], [2.0]), (1, [], [-2.0])]))
        d = homodyne_density(cat, 0)
        fock = fock_homodyne_density(embed(cat, 40), 0, d.grid)
        assert np.abs(fock - density_at(cat, 0, d.grid)).max() < 1e-7

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000))
    def test_always_normalized(self, seed):
        r = np.random.default_rng(seed)
        al, t = r.uniform(0.5, 30), r.uniform(0.05, 3.0)
        p = ProtocolParams(al, t)
        a = complex(*r.normal(size=2))
        b = complex(*r.normal(size=2))
        nrm = math.hypot(abs(a), abs(b))
        d = homodyne_density(teleport_pre_state(p, a / nrm, b / nrm), 0)
        assert d.total == pytest.approx(1.0, abs=1e-8)

    def test_bad_mode(self):
        with pytest.raises(IndexError):
            homodyne_density(HybridState.product(modes=[1.0]), 2)


class TestHomodyneMeasure:
    def test_forced_reproduces_conditional_state(self):
        p = ProtocolParams(5.0, 0.5)
        s = teleport_pre_state(p, 0.6, 0.8)
        x = 8.7
        _, out, dens = homodyne_measure(s, 0, x=x)
        raw = condition_on_x(s, 0, x)
        assert abs(abs(np.vdot(qubit_vector(out), qubit_vector(normalize(raw)))) - 1) < 1e-12
        assert dens == pytest.approx(density_at(s, 0, x)[0], rel=1e-12)
        assert np.linalg.norm(qubit_vector(out)) == pytest.approx(1.0, abs=1e-12)

    def test_single_branch_leaves_qubit_alone(self):
        s = HybridState.product(qubits=[[0.6, 0.8j]], modes=[1.0])
        for x in (-3.0, 0.0, 2.0, 7.0):
            _, out, _ = homodyne_measure(s, 0, x=x)
            assert np.allclose(qubit_vector(out), [0.6, 0.8j], atol=1e-14)

    def test_forced_outside_grid(self):
        with pytest.raises(ValueError):
            homodyne_measure(HybridState.product(modes=[1.0]), 0, x=100.0)

    def test_needs_source(self):
        with pytest.raises(ValueError):
            homodyne_measure(HybridState.product(modes=[1.0]), 0)

    def test_sampled_equals_forced(self, worked_params):
        s = teleport_pre_state(worked_params, 0.6, 0.8)
        x, sampled, _ = homodyne_measure(s, 0, rng=np.random.default_rng(9))
        _, forced, _ = homodyne_measure(s, 0, x=x)
        assert np.array_equal(sampled.coeffs, forced.coeffs)

    def test_reproducible(self, worked_params):
        s = teleport_pre_state(worked_params)
        xs = [homodyne_measure(s, 0, rng=np.random.default_rng(4))[0] for _ in range(2)]
        assert xs[0] == xs[1]

    def test_histogram_chi_square(self):
        p = ProtocolParams(3.0, 0.8)
        s = teleport_pre_state(p, 0.6, 0.8)
        d = homodyne_density(s, 0)
        rng = np.random.default_rng(2024)
        xs = np.array([d.sample(rng) for _ in range(100_000)])
        edges = np.quantile(xs, np.linspace(0, 1, 41))
        edges[0], edges[-1] = d.grid[0], d.grid[-1]
        cdf = np.interp(edges, d.grid, d.cumulative)
        expected = np.diff(cdf) * xs.size
        observed, _ = np.histogram(xs, edges)
        chi2 = np.sum((observed - expected) ** 2 / expected)
        pval = stats.chi2.sf(chi2, len(observed) - 1)
        assert pval > 0.001

    def test_collapse_consistency(self):
        # average of collapsed projectors equals the reduced qubit state
        p = ProtocolParams(2.0, 0.9)
        s = teleport_pre_state(p, 0.6, 0.8)
        rng = np.random.default_rng(77)
        n = 4000
        rhos = []
        for _ in range(n):
            _, out, _ = homodyne_measure(s, 0, rng=rng)
            v = qubit_vector(out)
            rhos.append(np.outer(v, v.conj()))
        rhos = np.array(rhos)
        # exact reduced state from the Gram matrix
        exact = np.zeros((2, 2), dtype=complex)
        for cj, bj, aj in zip(s.coeffs, s.bits, s.amps):
            for ck, bk, ak in zip(s.coeffs, s.bits, s.amps):
                exact[bj[0], bk[0]] += cj * np.conj(ck) * coherent_overlap(ak[0], aj[0])
        for part in (np.real, np.imag):
            samples = part(rhos)
            se = samples.std(axis=0, ddof=1) / math.sqrt(n)
            dev = np.abs(samples.mean(axis=0) - part(exact))
            assert np.all(dev <= 3 * se + 1e-12)


class TestPostselect:
    def test_zero_window_accepts(self):
        p = ProtocolParams(10, 0.2)
        assert postselect(p.x_0, p)

    def test_boundary_rejected(self):
        p = ProtocolParams(10, 0.2, y=0.5)
        assert not postselect(p.x_0 + 0.5, p)
        assert not postselect(p.x_0 - 0.5, p)
        assert postselect(p.x_0 + 0.50001, p)

    def test_acceptance_rate_worked_example(self):
        p = ProtocolParams.from_xd(2.5, 0.1, y=1.25)
        d = homodyne_density(teleport_pre_state(p), 0)
        rng = np.random.default_rng(11)
        hits = sum(postselect(d.sample(rng), p) for _ in range(100_000))
        assert hits / 100_000 == pytest.approx(0.506, abs=0.01)

    def test_record_fields(self):
        r = HomodyneRecord(0, 1.0, True, 0.0)
        assert r.correction_applied is None
