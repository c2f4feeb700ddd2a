"""Brute-force truncated Fock-basis simulator used to cross-check the branch code.

Everything here works on dense amplitude arrays of shape
``(2,) * n_qubits + (cutoff,) * n_modes`` and is computed from first
principles (number-basis expansions, matrix exponentials, Hermite
functions). Nothing is borrowed from ``hybrid_state`` or ``measurement``
except in ``run_equivalence_suite``, which compares the two.

The oracle is only practical for small amplitudes (|beta| up to about 3 at
cutoff 40). Working amplitudes, where alpha runs into the hundreds, are
covered by the branch simulator alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

TAIL_SIGMAS = 8.0
CUTOFF_SLACK = 16.0
TRUNCATION_BUDGET = 1e-10
LEAKAGE_TOL = 1e-9
X_STABLE = 42.0  # |x| beyond this underflows the n = 0 Hermite seed

DENSITY_TOL = 1e-7
STATE_TOL = 1e-8


class CutoffError(ValueError):
    """The requested truncation cannot hold the state within budget."""


class LeakageError(RuntimeError):
    """An operation pushed more than ``LEAKAGE_TOL`` of the norm past the cutoff."""


@dataclass(frozen=True, eq=False)
class FockState:
    """Dense state over qubit bits and truncated photon numbers."""

    n_qubits: int
    n_modes: int
    cutoff: int
    amplitudes: np.ndarray

    def __post_init__(self):
        shape = (2,) * self.n_qubits + (self.cutoff,) * self.n_modes
        if self.amplitudes.shape != shape:
            raise ValueError(f"amplitude array has shape {self.amplitudes.shape}, expected {shape}")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes.ravel()))

    def mode_axis(self, mode: int) -> int:
        if not 0 <= mode < self.n_modes:
            raise IndexError(f"mode index {mode} out of range")
        return self.n_qubits + mode

    def qubit_axis(self, qubit: int) -> int:
        if not 0 <= qubit < self.n_qubits:
            raise IndexError(f"qubit index {qubit} out of range")
        return qubit

    def _with(self, amplitudes: np.ndarray) -> "FockState":
        return FockState(self.n_qubits, self.n_modes, self.cutoff, amplitudes)


def required_cutoff(max_abs_amplitude: float) -> int:
    """Smallest cutoff allowed for coherent amplitudes up to ``max_abs_amplitude``."""
    mu = float(max_abs_amplitude) ** 2
    return int(math.ceil(mu + TAIL_SIGMAS * math.sqrt(mu) + CUTOFF_SLACK))


def coherent_vector(beta: complex, cutoff: int) -> np.ndarray:
    """Number-basis coefficients e^{-|beta|^2/2} beta^n / sqrt(n!), n < cutoff."""
    v = np.empty(cutoff, dtype=complex)
    v[0] = np.exp(-0.5 * abs(beta) ** 2)
    for n in range(1, cutoff):
        v[n] = v[n - 1] * beta / math.sqrt(n)
    return v


def embed(state, cutoff: int) -> FockState:
    """Dense embedding of a branch-representation ``HybridState``.

    Raises ``CutoffError`` if the cutoff is below the tail rule
    mu + 8 sqrt(mu) + 16 for the largest amplitude, or if any coherent
    factor loses more than ``TRUNCATION_BUDGET`` of its norm.
    """
    if any(op != "I" for op in state.qubit_frame + state.mode_frame):
        raise ValueError("flush the Pauli frame before embedding")
    amps = np.asarray(state.amps)
    biggest = float(np.abs(amps).max()) if amps.size else 0.0
    need = required_cutoff(biggest)
    if cutoff < need:
        raise CutoffError(f"cutoff {cutoff} below required {need} for |beta| = {biggest:.6g}")
    nq, nm = state.n_qubits, state.n_modes
    out = np.zeros((2,) * nq + (cutoff,) * nm, dtype=complex)
    for c, bits, row in zip(state.coeffs, state.bits, amps):
        term = np.array(c, dtype=complex)
        for beta in row:
            v = coherent_vector(beta, cutoff)
            deficit = 1.0 - float(np.vdot(v, v).real)
            if deficit > TRUNCATION_BUDGET:
                raise CutoffError(f"coherent state {beta} loses {deficit:.3g} at cutoff {cutoff}")
            term = np.multiply.outer(term, v)
        out[tuple(int(b) for b in bits)] += term
    return FockState(nq, nm, cutoff, out)


def fock_vacuum(n_qubits: int, n_modes: int, cutoff: int) -> FockState:
    """All qubits in |0>, all modes in vacuum."""
    amp = np.zeros((2,) * n_qubits + (cutoff,) * n_modes, dtype=complex)
    amp[(0,) * (n_qubits + n_modes)] = 1.0
    return FockState(n_qubits, n_modes, cutoff, amp)


def fock_inner_product(a: FockState, b: FockState) -> complex:
    if a.amplitudes.shape != b.amplitudes.shape:
        raise ValueError("dimension mismatch")
    return complex(np.vdot(a.amplitudes.ravel(), b.amplitudes.ravel()))


def _apply_along(state: FockState, axis: int, matrix: np.ndarray) -> FockState:
    """Act with ``matrix`` on one tensor axis."""
    moved = np.tensordot(matrix, state.amplitudes, axes=([1], [axis]))
    return state._with(np.moveaxis(moved, 0, axis))


def _diag_along(state: FockState, axis: int, diag: np.ndarray) -> FockState:
    shape = [1] * state.amplitudes.ndim
    shape[axis] = diag.size
    return state._with(state.amplitudes * diag.reshape(shape))


def fock_qubit_unitary(state: FockState, qubit: int, u) -> FockState:
    return _apply_along(state, state.qubit_axis(qubit), np.asarray(u, dtype=complex))


def fock_phase_shift(state: FockState, mode: int, phi: float) -> FockState:
    """exp(i phi n) on one mode."""
    n = np.arange(state.cutoff)
    return _diag_along(state, state.mode_axis(mode), np.exp(1j * phi * n))


def fock_controlled_rotation(state: FockState, qubit: int, mode: int, theta: float) -> FockState:
    """exp(i theta n) on ``mode`` when ``qubit`` is 1."""
    qa, ma = state.qubit_axis(qubit), state.mode_axis(mode)
    amp = state.amplitudes.copy()
    idx = [slice(None)] * amp.ndim
    idx[qa] = 1
    shape = [1] * (amp.ndim - 1)
    shape[ma - 1 if ma > qa else ma] = state.cutoff
    amp[tuple(idx)] = amp[tuple(idx)] * np.exp(1j * theta * np.arange(state.cutoff)).reshape(shape)
    return state._with(amp)


def _lowering(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


def fock_displacement(state: FockState, mode: int, delta: complex) -> FockState:
    """exp(delta a^dagger - conj(delta) a) on one mode.

    The exponential is taken in a space twice the cutoff so its own edge
    error stays far from the kept block; weight pushed past the cutoff must
    stay under ``LEAKAGE_TOL`` of the norm.
    """
    axis = state.mode_axis(mode)
    c = state.cutoff
    big = 2 * c + 32
    a = _lowering(big)
    u = expm(delta * a.conj().T - np.conj(delta) * a)[:, :c]
    moved = np.moveaxis(np.tensordot(u, state.amplitudes, axes=([1], [axis])), 0, axis)
    idx = [slice(None)] * moved.ndim
    idx[axis] = slice(c, None)
    leaked = float(np.sum(np.abs(moved[tuple(idx)]) ** 2))
    if leaked > LEAKAGE_TOL * state.norm**2:
        raise LeakageError(f"displacement leaks {leaked:.3g} past cutoff {c}")
    idx[axis] = slice(0, c)
    return state._with(np.ascontiguousarray(moved[tuple(idx)]))


def _splitter_block(total: int, zeta: float) -> np.ndarray:
    """exp[zeta (a_i^dag a_j - a_j^dag a_i)] on the span of |n, total - n>, n = 0..total."""
    n = np.arange(total)
    # <n+1, m-1| a_i^dag a_j |n, m> with m = total - n
    up = np.sqrt((n + 1) * (total - n))
    g = np.zeros((total + 1, total + 1))
    g[n + 1, n] = up
    g[n, n + 1] = -up
    return expm(zeta * g)


def fock_beamsplitter(state: FockState, mode_i: int, mode_j: int, transmissivity: float) -> FockState:
    """exp[zeta (a_i^dag a_j - a_i a_j^dag)] with cos(zeta) = sqrt(T).

    Applied block by block in total photon number, where the rotation is
    exact; components that would land beyond the cutoff are counted as
    leakage.
    """
    if mode_i == mode_j:
        raise ValueError("beam splitter needs two distinct modes")
    if not 0.0 <= transmissivity <= 1.0:
        raise ValueError(f"transmissivity {transmissivity} outside [0, 1]")
    ai, aj = state.mode_axis(mode_i), state.mode_axis(mode_j)
    c = state.cutoff
    zeta = math.acos(math.sqrt(transmissivity))
    amp = np.moveaxis(state.amplitudes, (ai, aj), (-2, -1))
    out = np.zeros_like(amp)
    leaked = 0.0
    for total in range(2 * c - 1):
        n = np.arange(total + 1)
        inside = (n < c) & (total - n < c)
        vec = np.zeros(amp.shape[:-2] + (total + 1,), dtype=complex)
        vec[..., inside] = amp[..., n[inside], total - n[inside]]
        if not np.any(vec):
            continue
        res = vec @ _splitter_block(total, zeta).T
        out[..., n[inside], total - n[inside]] = res[..., inside]
        leaked += float(np.sum(np.abs(res[..., ~inside]) ** 2))
    if leaked > LEAKAGE_TOL * state.norm**2:
        raise LeakageError(f"beam splitter leaks {leaked:.3g} past cutoff {c}")
    return state._with(np.ascontiguousarray(np.moveaxis(out, (-2, -1), (ai, aj))))


def mean_photon_number(state: FockState, mode: int) -> float:
    axis = state.mode_axis(mode)
    probs = np.abs(state.amplitudes) ** 2
    other = tuple(k for k in range(probs.ndim) if k != axis)
    marginal = probs.sum(axis=other)
    return float(marginal @ np.arange(state.cutoff) / marginal.sum())


def hermite_functions(q, n_max: int) -> np.ndarray:
    """Normalized Hermite functions psi_0..psi_{n_max-1} at points ``q``.

    Uses psi_{n+1} = sqrt(2/(n+1)) q psi_n - sqrt(n/(n+1)) psi_{n-1}, which
    never forms factorials or raw Hermite polynomials.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    out = np.empty((n_max,) + q.shape)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * q * q)
    if n_max > 1:
        out[1] = math.sqrt(2.0) * q * out[0]
    for n in range(1, n_max - 1):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * q * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def quadrature_wavefunctions(x, n_max: int) -> np.ndarray:
    """<x|n> for x = a + a^dagger, rows n = 0..n_max-1."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(np.abs(x) > X_STABLE):
        raise ValueError(f"x outside the stable range [-{X_STABLE}, {X_STABLE}]")
    return 2.0**-0.25 * hermite_functions(x / math.sqrt(2.0), n_max)


def fock_position_amplitude(x, beta: complex, cutoff: int = 80) -> np.ndarray:
    """<x|beta> summed over the number basis."""
    return coherent_vector(beta, cutoff) @ quadrature_wavefunctions(x, cutoff)


def fock_conditional_state(state: FockState, mode: int, x: float) -> FockState:
    """Unnormalized <x|_mode psi> with the mode removed."""
    axis = state.mode_axis(mode)
    wf = quadrature_wavefunctions(x, state.cutoff)[:, 0]
    amp = np.tensordot(state.amplitudes, wf, axes=([axis], [0]))
    return FockState(state.n_qubits, state.n_modes - 1, state.cutoff, amp)


def fock_homodyne_density(state: FockState, mode: int, grid) -> np.ndarray:
    """p(x) = || <x|_mode psi ||^2 on ``grid``, for a normalized ``state``."""
    axis = state.mode_axis(mode)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    wf = quadrature_wavefunctions(grid, state.cutoff)
    proj = np.tensordot(state.amplitudes, wf, axes=([axis], [0]))
    probs = np.abs(proj) ** 2
    return probs.reshape(-1, grid.size).sum(axis=0)


# ----------------------------------------------------------------------------
# equivalence suite


@dataclass
class OracleCheck:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tolerance)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "error": self.error,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


@dataclass
class OracleReport:
    alpha: float
    theta: float
    cutoff: int
    checks: list[OracleCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_density_error(self) -> float:
        errs = [c.error for c in self.checks if c.name.startswith("density")]
        return max(errs) if errs else 0.0

    def as_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "theta": self.theta,
            "cutoff": self.cutoff,
            "passed": self.passed,
            "max_density_error": self.max_density_error,
            "checks": [c.as_dict() for c in self.checks],
        }


def _vector_error(a: FockState, b: FockState) -> float:
    return float(np.abs(a.amplitudes - b.amplitudes).max())


def run_equivalence_suite(alpha: float = 2.0, theta: float = 0.6, cutoff: int = 40, seed: int = 7) -> OracleReport:
    """Compare every branch-simulator operation with its Fock counterpart.

    State checks compare full dense vectors and inner products against
    random product probes (tolerance 1e-8); density checks compare pointwise
    on the measurement module's own grid (tolerance 1e-7). Raises
    ``CutoffError`` if ``cutoff`` cannot hold the test states.
    """
    from . import hybrid_state as hs
    from . import measurement as ms

    if alpha > 3:
        raise CutoffError("the oracle suite is restricted to alpha <= 3")
    rng = np.random.default_rng(seed)
    report = OracleReport(alpha, theta, cutoff)
    rot = alpha * np.exp(1j * theta)

    def check_state(name, hybrid, fock):
        report.checks.append(OracleCheck(name, _vector_error(embed(hybrid, cutoff), fock), STATE_TOL))

    # Choi-type state (|0, a> + |1, a e^{i theta}>)/sqrt(2)
    choi = hs.HybridState.from_branches([(1 / math.sqrt(2), [0], [alpha]), (1 / math.sqrt(2), [1], [rot])])
    f_choi = embed(choi, cutoff)
    worst = 0.0
    for _ in range(10):
        qv = rng.normal(size=2) + 1j * rng.normal(size=2)
        qv /= np.linalg.norm(qv)
        # keep |beta| <= alpha so the probe fits whatever cutoff holds the state
        beta = alpha * math.sqrt(rng.uniform()) * np.exp(2j * math.pi * rng.uniform())
        probe = hs.HybridState.product(qubits=[qv], modes=[beta])
        worst = max(worst, abs(hs.inner_product(probe, choi) - fock_inner_product(embed(probe, cutoff), f_choi)))
    report.checks.append(OracleCheck("embed/probe inner products", worst, STATE_TOL))

    plus = hs.HybridState.product(qubits=[hs.PLUS], modes=[alpha])
    f_plus = embed(plus, cutoff)
    check_state(
        "controlled rotation",
        hs.apply_controlled_rotation(plus, 0, 0, theta),
        fock_controlled_rotation(f_plus, 0, 0, theta),
    )
    check_state("phase shift", hs.apply_phase_shift(choi, 0, -theta), fock_phase_shift(f_choi, 0, -theta))
    u = np.array([[np.cos(0.4), -np.sin(0.4) * np.exp(-0.3j)], [np.sin(0.4) * np.exp(0.3j), np.cos(0.4)]])
    check_state("qubit unitary", hs.apply_qubit_unitary(choi, 0, u), fock_qubit_unitary(f_choi, 0, u))

    delta = -alpha * np.cos(theta / 2) * np.exp(1j * theta / 2)
    check_state("displacement", hs.apply_displacement(choi, 0, delta), fock_displacement(f_choi, 0, delta))
    vac = hs.HybridState.product(modes=[0.0])
    check_state("displacement of vacuum", hs.apply_displacement(vac, 0, 1.0), fock_displacement(embed(vac, cutoff), 0, 1.0))

    pair = hs.HybridState.from_branches(
        [(1 / math.sqrt(2), [0], [alpha, 0.5]), (1 / math.sqrt(2), [1], [rot, -0.5j])]
    )
    f_pair = embed(pair, cutoff)
    for t in (0.5, 0.3, 1.0):
        check_state(
            f"beam splitter T={t}",
            hs.apply_beamsplitter(pair, 0, 1, t),
            fock_beamsplitter(f_pair, 0, 1, t),
        )
    small = min(alpha, 1.5)
    bus = hs.HybridState.product(modes=[math.sqrt(2) * small, 0.0])
    check_state(
        "symmetric splitter on sqrt(2) alpha",
        hs.apply_beamsplitter(bus, 0, 1, 0.5),
        fock_beamsplitter(embed(bus, cutoff), 0, 1, 0.5),
    )
    trio = hs.HybridState.product(modes=[math.sqrt(3) * min(alpha, 1.2), 0.0, 0.0])
    f_trio = embed(trio, cutoff)
    for k, m in enumerate((1, 2)):
        f_trio = fock_beamsplitter(f_trio, 0, m, 1.0 - 1.0 / (3 - k))
        f_trio = fock_phase_shift(f_trio, m, math.pi)
    check_state("three-port splitter", hs.apply_nport_splitter(trio, 0, [1, 2]), f_trio)

    # homodyne densities on the branch simulator's own grid
    bus = hs.HybridState.from_branches([(0.6, [], [alpha]), (0.8j, [], [rot])])
    pre = hs.apply_controlled_rotation(hs.add_qubit(hs.normalize(bus), hs.PLUS), 0, 0, -theta)
    cat = hs.normalize(hs.HybridState.from_branches([(1.0, [], [alpha]), (1.0, [], [-alpha])]))
    for name, st in (("density one-bit teleport", pre), ("density cat", cat), ("density vacuum", vac)):
        tab = ms.homodyne_density(st, 0)
        fock_d = fock_homodyne_density(embed(hs.normalize(st), cutoff), 0, tab.grid)
        branch_d = ms.density_at(hs.normalize(st), 0, tab.grid)
        report.checks.append(OracleCheck(name, float(np.abs(fock_d - branch_d).max()), DENSITY_TOL))

    # conditional states after a forced homodyne outcome
    worst = 0.0
    f_pre = embed(pre, cutoff)
    for x in rng.uniform(2 * alpha * math.cos(theta) - 2, 2 * alpha + 2, size=5):
        cond = ms.condition_on_x(pre, 0, float(x))
        f_cond = fock_conditional_state(f_pre, 0, float(x))
        worst = max(worst, float(np.abs(embed(cond, cutoff).amplitudes - f_cond.amplitudes).max()))
    report.checks.append(OracleCheck("homodyne conditional state", worst, STATE_TOL))

    beta = 2.0 * np.exp(0.7j)
    err = abs(ms.position_amplitude(1.0, beta) - fock_position_amplitude(1.0, beta, cutoff)[0])
    report.checks.append(OracleCheck("position amplitude", float(err), STATE_TOL))
    return report


def displacement_relative_phase(alpha: float, theta: float, cutoff: int = 40) -> float:
    """Relative phase Phi in a|a'> + b e^{i Phi}|-a'> after the displace-and-rotate map.

    Starting from (|alpha> + |alpha e^{i theta}>)/sqrt(2), apply
    D(-alpha cos(theta/2) e^{i theta/2}) and a (pi - theta)/2 phase shift,
    then read Phi off by projecting on |+-a'> with a' = alpha sin(theta/2).
    """
    a0 = coherent_vector(alpha, cutoff)
    a1 = coherent_vector(alpha * np.exp(1j * theta), cutoff)
    vec = FockState(0, 1, cutoff, (a0 + a1) / math.sqrt(2))
    vec = fock_displacement(vec, 0, -alpha * math.cos(theta / 2) * np.exp(1j * theta / 2))
    vec = fock_phase_shift(vec, 0, (math.pi - theta) / 2)
    ap = alpha * math.sin(theta / 2)
    plus, minus = coherent_vector(ap, cutoff), coherent_vector(-ap, cutoff)
    # solve vec = a |a'> + b |-a'> in the two-dimensional span
    basis = np.stack([plus, minus], axis=1)
    (ca, cb), *_ = np.linalg.lstsq(basis, vec.amplitudes, rcond=None)
    return float(np.angle(cb / ca))
