"""Qubit measurements and x-quadrature homodyne detection on hybrid states.

Quadrature convention: x = a + a^dagger, so a coherent state |beta> gives a
unit-variance Gaussian in x centred at 2 Re(beta).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hybrid_state import (
    HADAMARD,
    HybridState,
    ProtocolParams,
    _evolve,
    apply_qubit_unitary,
    drop_mode,
    drop_qubit,
    normalize,
    overlap_matrix,
    state_norm,
)

GRID_MARGIN = 16.0
GRID_TOL = 1e-9
GRID_STEP = 0.1
FRINGE_POINTS = 20
MAX_REFINE = 12
MIN_PROB = 1e-300

_NORM = (2.0 * np.pi) ** -0.25


def position_amplitude(x, beta):
    """<x|beta> = (2 pi)^(-1/4) exp(-(x - 2 Re beta)^2 / 4 + i Im beta (x - Re beta))."""
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=complex)
    re, im = beta.real, beta.imag
    return _NORM * np.exp(-((x - 2.0 * re) ** 2) / 4.0 + 1j * im * (x - re))


def correction_phase(x, params: ProtocolParams):
    """phi(x) such that <x|alpha e^{i theta}> = e^{i phi(x)} |<x|alpha e^{i theta}>|.

    Read off from ``position_amplitude`` so the corrections always match the
    quadrature convention in use.
    """
    return np.angle(position_amplitude(x, params.alpha * np.exp(1j * params.theta)))


@dataclass(frozen=True)
class HomodyneRecord:
    """One homodyne detection inside a protocol run."""

    mode: int
    outcome_x: float
    accepted: bool
    window_y: float
    correction_applied: str | None = None


@dataclass(frozen=True, eq=False)
class QuadratureDensity:
    """Tabulated homodyne outcome density with its cumulative distribution."""

    grid: np.ndarray
    density: np.ndarray
    cumulative: np.ndarray

    @property
    def total(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def contains(self, x: float) -> bool:
        return bool(self.grid[0] <= x <= self.grid[-1])

    def sample(self, rng: np.random.Generator) -> float:
        """Inverse-CDF draw, exact for the piecewise-linear interpolated density."""
        u = rng.random()
        i = int(np.searchsorted(self.cumulative, u, side="right")) - 1
        i = min(max(i, 0), len(self.grid) - 2)
        x0, x1 = self.grid[i], self.grid[i + 1]
        h = x1 - x0
        p0, p1 = self.density[i], self.density[i + 1]
        need = u - self.cumulative[i]
        slope = (p1 - p0) / h
        # solve p0 t + slope t^2 / 2 = need for t in [0, h]
        if abs(slope) * h < 1e-12 * max(p0, 1e-300):
            t = need / p0 if p0 > 0 else 0.5 * h
        else:
            disc = max(p0 * p0 + 2.0 * slope * need, 0.0)
            t = 2.0 * need / (p0 + np.sqrt(disc)) if p0 + np.sqrt(disc) > 0 else 0.5 * h
        return float(x0 + min(max(t, 0.0), h))


def _density(coeffs, amps_m, o, x) -> np.ndarray:
    w = coeffs[:, None] * position_amplitude(np.atleast_1d(x)[None, :], amps_m[:, None])
    return np.maximum(np.real(np.sum(np.conj(w) * (o @ w), axis=0)), 0.0)


def density_at(state: HybridState, mode: int, x) -> np.ndarray:
    """Homodyne outcome density p(x) for a normalized ``state``; vectorized in x."""
    o = overlap_matrix(state, state, skip_mode=mode)
    return _density(state.coeffs, state.amps[:, mode], o, x)


def _fringe_frequency(coeffs, amps_m, o) -> float:
    """Largest fringe frequency among branch pairs that actually interfere."""
    weight = np.abs(np.conj(coeffs)[:, None] * o * coeffs[None, :])
    im = amps_m.imag
    spread = np.abs(im[:, None] - im[None, :])
    live = weight > 1e-13
    return float(spread[live].max()) if live.any() else 0.0


def grid_span(state: HybridState, mode: int) -> tuple[float, float]:
    means = 2.0 * state.amps[:, mode].real
    return float(means.min() - GRID_MARGIN), float(means.max() + GRID_MARGIN)


def _tabulate(state: HybridState, mode: int, o: np.ndarray) -> QuadratureDensity:
    lo, hi = grid_span(state, mode)
    coeffs, amps_m = state.coeffs, state.amps[:, mode]
    freq = _fringe_frequency(coeffs, amps_m, o)
    h = GRID_STEP if freq == 0 else min(GRID_STEP, 2.0 * np.pi / (FRINGE_POINTS * freq))
    n = int(np.ceil((hi - lo) / (2.0 * h)))
    for _ in range(MAX_REFINE):
        grid = np.linspace(lo, hi, 2 * n + 1)
        dens = _density(coeffs, amps_m, o, grid)
        cells = 0.5 * (dens[1:] + dens[:-1]) * (grid[1] - grid[0])
        fine = cells.sum()
        coarse = np.trapezoid(dens[::2], grid[::2])
        if abs(fine - coarse) < GRID_TOL:
            break
        n *= 2
    else:
        raise RuntimeError("homodyne density grid did not converge")
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    total = cum[-1]
    return QuadratureDensity(grid=grid, density=dens / total, cumulative=cum / total)


def homodyne_density(state: HybridState, mode: int) -> QuadratureDensity:
    """Tabulate the x-quadrature outcome density of ``mode``.

    The step starts small enough to resolve interference fringes between
    branches (their frequency is the spread of Im(beta)) and is halved until
    the trapezoid integral changes by less than ``GRID_TOL``.
    """
    if not 0 <= mode < state.n_modes:
        raise IndexError(f"mode index {mode} out of range")
    state = normalize(state)
    return _tabulate(state, mode, overlap_matrix(state, state, skip_mode=mode))


def condition_on_x(state: HybridState, mode: int, x: float) -> HybridState:
    """Unnormalized <x|_mode psi>; the measured mode is removed."""
    return drop_mode(state, mode, factors=position_amplitude(x, state.amps[:, mode]))


def homodyne_measure(
    state: HybridState,
    mode: int,
    x: float | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[float, HybridState, float]:
    """Measure the x quadrature of ``mode``.

    Pass ``x`` to force the outcome, otherwise it is drawn with ``rng``.
    Returns the outcome, the renormalized post-measurement state (mode
    removed) and the outcome density at x.
    """
    if not 0 <= mode < state.n_modes:
        raise IndexError(f"mode index {mode} out of range")
    state = normalize(state)
    o = overlap_matrix(state, state, skip_mode=mode)
    if x is None:
        if rng is None:
            raise ValueError("need either a forced outcome or a random generator")
        x = _tabulate(state, mode, o).sample(rng)
    else:
        lo, hi = grid_span(state, mode)
        if not lo <= x <= hi:
            raise ValueError(f"forced outcome {x} outside tabulated range [{lo}, {hi}]")
    x = float(x)
    p = float(_density(state.coeffs, state.amps[:, mode], o, x)[0])
    # the conditional state's norm^2 is p(x) for a normalized input
    collapsed = condition_on_x(state, mode, x)
    if p < 1e-8:
        return x, normalize(collapsed), p
    return x, _evolve(collapsed, coeffs=collapsed.coeffs / np.sqrt(p)), p


def measure_qubit(
    state: HybridState,
    qubit: int,
    basis: str = "Z",
    outcome: int | None = None,
    rng: np.random.Generator | None = None,
    remove: bool = False,
) -> tuple[int, HybridState, float]:
    """Projective measurement of one qubit in the Z or X basis.

    Outcomes are 0/1 (for X: 0 is |+>, 1 is |->). An X measurement is a
    Hadamard followed by a Z measurement; unless ``remove`` is set the
    Hadamard is undone so the qubit is left in |+> or |->. Returns the
    outcome, the renormalized collapsed state and the Born probability.
    """
    basis = basis.upper()
    if basis not in ("X", "Z"):
        raise ValueError(f"unknown basis {basis!r}")
    if basis == "X":
        state = apply_qubit_unitary(state, qubit, HADAMARD)
    total = state_norm(state) ** 2
    branches = {}
    probs = []
    for b in (0, 1):
        keep = state.bits[:, qubit] == b
        part = _evolve(
            state, coeffs=state.coeffs[keep], bits=state.bits[keep], amps=state.amps[keep]
        )
        branches[b] = part
        probs.append(state_norm(part) ** 2 / total if part.n_branches else 0.0)
    if outcome is None:
        if rng is None:
            raise ValueError("need either a forced outcome or a random generator")
        outcome = int(rng.random() >= probs[0])
    outcome = int(outcome)
    if outcome not in (0, 1):
        raise ValueError("qubit outcome must be 0 or 1")
    if probs[outcome] < MIN_PROB:
        raise ValueError(f"outcome {outcome} has probability {probs[outcome]:.3g}")
    collapsed = normalize(branches[outcome])
    if remove:
        collapsed = drop_qubit(collapsed, qubit)
    elif basis == "X":
        collapsed = apply_qubit_unitary(collapsed, qubit, HADAMARD)
    return outcome, collapsed, float(probs[outcome])


def postselect(x: float, params: ProtocolParams) -> bool:
    """Accept iff the outcome lies strictly outside the window x_0 +/- y."""
    if params.y == 0:
        return True
    return bool(abs(x - params.x_0) > params.y)
