"""Exact branch representation of hybrid qubit / coherent-state registers.

A state is a finite superposition

    sum_k c_k |bits_k> (x) |beta_k[0]> (x) ... (x) |beta_k[M-1]>

of qubit basis strings tensored with multimode coherent states. Every
operation used by the qubus circuits (controlled rotations, phase shifts,
displacements, beam splitters, qubit unitaries) maps such a sum to another
such sum, so the representation is exact. Overlaps between branches are
non-zero in general, so norms and inner products go through the coherent
Gram matrix.

All functions return new states; a ``HybridState`` is never mutated after
construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

MERGE_TOL = 1e-12
PRUNE_TOL = 1e-14
UNITARY_TOL = 1e-12
_EYE2 = np.eye(2)

FRAME_OPS = ("I", "X", "Z", "XZ")


@dataclass(frozen=True)
class ProtocolParams:
    """Physical parameters shared by every teleportation in a protocol run.

    Attributes:
        alpha: bus coherent amplitude (real, > 0).
        theta: controlled-rotation angle in radians, in (0, pi).
        y: post-selection half-width around ``x_0``; 0 accepts everything.
    """

    alpha: float
    theta: float
    y: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.theta < np.pi:
            raise ValueError(f"theta must lie in (0, pi), got {self.theta}")
        if not self.y >= 0:
            raise ValueError(f"y must be non-negative, got {self.y}")

    @property
    def x_d(self) -> float:
        """Separation of the two homodyne peaks, 2 alpha (1 - cos theta)."""
        return 2.0 * self.alpha * (1.0 - np.cos(self.theta))

    @property
    def x_0(self) -> float:
        """Midpoint alpha (1 + cos theta) between the peaks."""
        return self.alpha * (1.0 + np.cos(self.theta))

    @classmethod
    def from_xd(cls, x_d: float, theta: float = 0.1, y: float = 0.0) -> "ProtocolParams":
        """Choose alpha so that the peak separation equals ``x_d``."""
        return cls(alpha=x_d / (2.0 * (1.0 - np.cos(theta))), theta=theta, y=y)


def compose_frame(a: str, b: str) -> str:
    """Product of two pending Pauli flags, ignoring global phase."""
    x = ("X" in a) != ("X" in b)
    z = ("Z" in a) != ("Z" in b)
    return {(False, False): "I", (True, False): "X", (False, True): "Z", (True, True): "XZ"}[(x, z)]


@dataclass(frozen=True, eq=False)
class HybridState:
    """Superposition of (qubit bitstring) x (multimode coherent state) branches.

    Attributes:
        coeffs: complex branch coefficients, shape ``(K,)``.
        bits: qubit values per branch, shape ``(K, n_qubits)``.
        amps: coherent amplitudes per branch, shape ``(K, n_modes)``.
        qubit_frame: pending Pauli correction per qubit.
        mode_frame: pending logical correction per bus mode (``"Z"`` is the
            deferred Z-tilde of a qubit-to-qubus teleport).
        controlled_rotations: number of controlled rotations applied so far.
    """

    coeffs: np.ndarray
    bits: np.ndarray
    amps: np.ndarray
    qubit_frame: tuple[str, ...] = ()
    mode_frame: tuple[str, ...] = ()
    controlled_rotations: int = 0

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        k = coeffs.shape[0]
        bits = np.asarray(self.bits, dtype=np.int8).reshape(k, -1) if k else np.asarray(self.bits, dtype=np.int8)
        amps = np.asarray(self.amps, dtype=complex).reshape(k, -1) if k else np.asarray(self.amps, dtype=complex)
        if not (np.all(np.isfinite(coeffs)) and np.all(np.isfinite(amps))):
            raise ValueError("non-finite coefficient or amplitude")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "amps", amps)
        nq, nm = bits.shape[1], amps.shape[1]
        if not self.qubit_frame:
            object.__setattr__(self, "qubit_frame", ("I",) * nq)
        if not self.mode_frame:
            object.__setattr__(self, "mode_frame", ("I",) * nm)
        if len(self.qubit_frame) != nq or len(self.mode_frame) != nm:
            raise ValueError("frame length does not match register size")

    @property
    def n_qubits(self) -> int:
        return self.bits.shape[1]

    @property
    def n_modes(self) -> int:
        return self.amps.shape[1]

    @property
    def n_branches(self) -> int:
        return self.coeffs.shape[0]

    def __repr__(self):
        return (
            f"HybridState(n_qubits={self.n_qubits}, n_modes={self.n_modes}, "
            f"branches={self.n_branches})"
        )

    @classmethod
    def product(cls, qubits: Sequence = (), modes: Sequence[complex] = ()) -> "HybridState":
        """Product state from per-qubit 2-vectors and per-mode amplitudes."""
        state = cls(np.ones(1), np.zeros((1, 0)), np.zeros((1, 0)))
        for q in qubits:
            state = add_qubit(state, q)
        for a in modes:
            state = add_mode(state, a)
        return state

    @classmethod
    def from_branches(
        cls, branches: Sequence[tuple[complex, Sequence[int], Sequence[complex]]]
    ) -> "HybridState":
        """Build a state from ``(coeff, bits, amps)`` triples, then merge."""
        coeffs = [b[0] for b in branches]
        bits = [list(b[1]) for b in branches]
        amps = [list(b[2]) for b in branches]
        nq = len(bits[0]) if bits else 0
        nm = len(amps[0]) if amps else 0
        state = cls(
            np.asarray(coeffs, dtype=complex),
            np.asarray(bits, dtype=np.int8).reshape(len(branches), nq),
            np.asarray(amps, dtype=complex).reshape(len(branches), nm),
        )
        return canonicalize(state)


_FIELDS = ("coeffs", "bits", "amps", "qubit_frame", "mode_frame", "controlled_rotations")


def _evolve(state: HybridState, **changes) -> HybridState:
    """``dataclasses.replace`` without re-validation, for internal hot paths."""
    new = object.__new__(HybridState)
    for name in _FIELDS:
        object.__setattr__(new, name, changes.get(name, getattr(state, name)))
    return new


def coherent_overlap(beta, gamma):
    """<beta|gamma> for coherent states; broadcasts over arrays.

    Written as exp(-|beta - gamma|^2 / 2 + i Im(conj(beta) gamma)), which is
    the same as exp(-|beta|^2/2 - |gamma|^2/2 + conj(beta) gamma) but keeps
    the modulus accurate for large, nearby amplitudes.
    """
    beta = np.asarray(beta, dtype=complex)
    gamma = np.asarray(gamma, dtype=complex)
    d = beta - gamma
    return np.exp(-0.5 * (d.real**2 + d.imag**2) + 1j * np.imag(np.conj(beta) * gamma))


def overlap_matrix(a: HybridState, b: HybridState, skip_mode: int | None = None) -> np.ndarray:
    """Matrix ``O[j, k] = <bits_j, amps_j | bits_k, amps_k>`` without coefficients."""
    same = np.all(a.bits[:, None, :] == b.bits[None, :, :], axis=2)
    ov = coherent_overlap(a.amps[:, None, :], b.amps[None, :, :])
    if skip_mode is not None:
        ov = np.delete(ov, skip_mode, axis=2)
    return same * np.prod(ov, axis=2)


def inner_product(a: HybridState, b: HybridState) -> complex:
    """<a|b>."""
    if a.n_qubits != b.n_qubits or a.n_modes != b.n_modes:
        raise ValueError(
            f"dimension mismatch: ({a.n_qubits}, {a.n_modes}) vs ({b.n_qubits}, {b.n_modes})"
        )
    return complex(np.conj(a.coeffs) @ overlap_matrix(a, b) @ b.coeffs)


def state_norm(state: HybridState) -> float:
    """sqrt(<psi|psi>)."""
    return float(np.sqrt(max(inner_product(state, state).real, 0.0)))


def normalize(state: HybridState) -> HybridState:
    n = state_norm(state)
    if n == 0:
        raise ValueError("cannot normalize a zero state")
    return _evolve(state, coeffs=state.coeffs / n)


def fidelity(a: HybridState, b: HybridState) -> float:
    """|<a|b>|^2 / (<a|a><b|b>)."""
    num = abs(inner_product(a, b)) ** 2
    return float(num / (inner_product(a, a).real * inner_product(b, b).real))


@lru_cache(maxsize=64)
def _upper(k: int) -> np.ndarray:
    return np.triu(np.ones((k, k), dtype=bool), 1)


def canonicalize(state: HybridState) -> HybridState:
    """Merge numerically identical branches and drop negligible ones."""
    k = state.n_branches
    if k == 0:
        return state
    # nan and inf both survive summation, so one check covers every entry
    if not np.isfinite(state.coeffs.sum() + state.amps.sum()):
        raise ValueError("non-finite coefficient or amplitude")
    coeffs = state.coeffs
    if k > 1:
        same_bits = (state.bits[:, None, :] == state.bits[None, :, :]).all(axis=2)
        close = (np.abs(state.amps[:, None, :] - state.amps[None, :, :]) <= MERGE_TOL).all(axis=2)
        dup = same_bits & close & _upper(k)
        if dup.any():
            coeffs = coeffs.copy()
            alive = np.ones(k, dtype=bool)
            for j in range(k):
                if not alive[j]:
                    continue
                partners = np.nonzero(dup[j] & alive)[0]
                if partners.size:
                    coeffs[j] += coeffs[partners].sum()
                    alive[partners] = False
            coeffs = np.where(alive, coeffs, 0.0)
    mags = np.abs(coeffs)
    # the Gram norm never exceeds sum |c|, so only small coefficients need the exact norm
    if mags.min() >= PRUNE_TOL * mags.sum():
        return _evolve(state, coeffs=coeffs)
    merged = _evolve(state, coeffs=coeffs)
    keep = mags >= PRUNE_TOL * max(state_norm(merged), np.finfo(float).tiny)
    if keep.all():
        return merged
    if not keep.any():
        keep[np.argmax(mags)] = True
    return _evolve(merged, coeffs=coeffs[keep], bits=state.bits[keep], amps=state.amps[keep])


def _check_qubit(state: HybridState, q: int):
    if not 0 <= q < state.n_qubits:
        raise IndexError(f"qubit index {q} out of range for {state.n_qubits} qubits")


def _check_mode(state: HybridState, m: int):
    if not 0 <= m < state.n_modes:
        raise IndexError(f"mode index {m} out of range for {state.n_modes} modes")


def apply_qubit_unitary(state: HybridState, qubit: int, u) -> HybridState:
    """Apply a 2x2 unitary to one qubit."""
    _check_qubit(state, qubit)
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or np.abs(u.conj().T @ u - _EYE2).max() > UNITARY_TOL:
        raise ValueError("gate is not a 2x2 unitary")
    b = state.bits[:, qubit].astype(int)
    new_coeffs, new_bits, new_amps = [], [], []
    for out in (0, 1):
        nz = u[out, b] != 0
        bits = state.bits[nz].copy()
        bits[:, qubit] = out
        new_coeffs.append(u[out, b][nz] * state.coeffs[nz])
        new_bits.append(bits)
        new_amps.append(state.amps[nz])
    return canonicalize(
        _evolve(
            state,
            coeffs=np.concatenate(new_coeffs),
            bits=np.concatenate(new_bits),
            amps=np.concatenate(new_amps),
        )
    )


def apply_controlled_rotation(state: HybridState, qubit: int, mode: int, theta: float) -> HybridState:
    """Rotate ``mode`` by ``theta`` in phase space on branches where ``qubit`` is 1."""
    _check_qubit(state, qubit)
    _check_mode(state, mode)
    amps = state.amps.copy()
    on = state.bits[:, qubit] == 1
    amps[on, mode] *= np.exp(1j * theta)
    return canonicalize(
        _evolve(state, amps=amps, controlled_rotations=state.controlled_rotations + 1)
    )


def apply_phase_shift(state: HybridState, mode: int, phi: float) -> HybridState:
    """exp(i phi n) on one mode; coherent states pick up no extra phase."""
    _check_mode(state, mode)
    amps = state.amps.copy()
    amps[:, mode] *= np.exp(1j * phi)
    return canonicalize(_evolve(state, amps=amps))


def apply_displacement(state: HybridState, mode: int, delta: complex) -> HybridState:
    """D(delta)|beta> = exp((delta conj(beta) - conj(delta) beta) / 2) |beta + delta>."""
    _check_mode(state, mode)
    delta = complex(delta)
    beta = state.amps[:, mode]
    phase = np.exp(1j * np.imag(delta * np.conj(beta)))
    amps = state.amps.copy()
    amps[:, mode] = beta + delta
    return canonicalize(_evolve(state, coeffs=state.coeffs * phase, amps=amps))


def apply_beamsplitter(state: HybridState, mode_i: int, mode_j: int, transmissivity: float) -> HybridState:
    """Real orthogonal splitter [[sqrt(T), sqrt(1-T)], [-sqrt(1-T), sqrt(T)]] on (i, j)."""
    _check_mode(state, mode_i)
    _check_mode(state, mode_j)
    if mode_i == mode_j:
        raise ValueError("beam splitter needs two distinct modes")
    if not 0.0 <= transmissivity <= 1.0:
        raise ValueError(f"transmissivity {transmissivity} outside [0, 1]")
    t = np.sqrt(transmissivity)
    r = np.sqrt(1.0 - transmissivity)
    bi = state.amps[:, mode_i]
    bj = state.amps[:, mode_j]
    amps = state.amps.copy()
    amps[:, mode_i] = t * bi + r * bj
    amps[:, mode_j] = -r * bi + t * bj
    return canonicalize(_evolve(state, amps=amps))


def apply_nport_splitter(state: HybridState, source: int, targets: Sequence[int]) -> HybridState:
    """Spread the source amplitude evenly over ``source`` and the vacuum ``targets``.

    Amplitude beta on the source ends up as +beta/sqrt(N) on each of the N
    modes. Built from a cascade of two-mode splitters; at step k the target
    takes 1/(N-k) of the remaining intensity, and a pi phase shift undoes the
    splitter's minus sign on the reflected port.
    """
    _check_mode(state, source)
    targets = list(targets)
    for m in targets:
        _check_mode(state, m)
        if m == source:
            raise ValueError("source listed among targets")
        if np.any(np.abs(state.amps[:, m]) > MERGE_TOL):
            raise ValueError(f"target mode {m} is not vacuum")
    n = len(targets) + 1
    for k, m in enumerate(targets):
        remaining = n - k
        state = apply_beamsplitter(state, source, m, 1.0 - 1.0 / remaining)
        state = apply_phase_shift(state, m, np.pi)
    return state


def add_qubit(state: HybridState, initial, index: int | None = None) -> HybridState:
    """Tensor a new qubit in state ``initial`` (normalized 2-vector) into the register."""
    v = np.asarray(initial, dtype=complex).reshape(-1)
    if v.shape != (2,) or abs(np.vdot(v, v).real - 1.0) > 1e-12:
        raise ValueError("initial qubit state must be a normalized 2-vector")
    if index is None:
        index = state.n_qubits
    if not 0 <= index <= state.n_qubits:
        raise IndexError(f"cannot insert qubit at {index}")
    parts = [(val, bit) for bit, val in enumerate(v) if val != 0]
    k = state.n_branches
    coeffs = np.concatenate([state.coeffs * val for val, _ in parts])
    bits = np.concatenate(
        [np.insert(state.bits, index, np.full(k, bit, dtype=np.int8), axis=1) for _, bit in parts]
    )
    amps = np.concatenate([state.amps for _ in parts])
    frame = state.qubit_frame[:index] + ("I",) + state.qubit_frame[index:]
    return canonicalize(_evolve(state, coeffs=coeffs, bits=bits, amps=amps, qubit_frame=frame))


def add_mode(state: HybridState, amplitude: complex, index: int | None = None) -> HybridState:
    """Tensor a new coherent mode |amplitude> into the register."""
    if index is None:
        index = state.n_modes
    if not 0 <= index <= state.n_modes:
        raise IndexError(f"cannot insert mode at {index}")
    amps = np.insert(state.amps, index, np.full(state.n_branches, complex(amplitude)), axis=1)
    frame = state.mode_frame[:index] + ("I",) + state.mode_frame[index:]
    return _evolve(state, amps=amps, mode_frame=frame)


def drop_mode(state: HybridState, mode: int, factors=None) -> HybridState:
    """Delete a mode, optionally rescaling each branch by ``factors`` first.

    No consistency check; measurement code uses this after conditioning.
    """
    _check_mode(state, mode)
    coeffs = state.coeffs if factors is None else state.coeffs * np.asarray(factors)
    frame = state.mode_frame[:mode] + state.mode_frame[mode + 1 :]
    return canonicalize(
        _evolve(state, coeffs=coeffs, amps=np.delete(state.amps, mode, axis=1), mode_frame=frame)
    )


def remove_mode(state: HybridState, mode: int) -> HybridState:
    """Remove a mode that is in the same coherent state on every branch."""
    _check_mode(state, mode)
    col = state.amps[:, mode]
    if np.any(np.abs(col - col[0]) > MERGE_TOL):
        raise ValueError(f"mode {mode} is entangled with the rest of the register")
    return drop_mode(state, mode)


def drop_qubit(state: HybridState, qubit: int, factors=None) -> HybridState:
    _check_qubit(state, qubit)
    coeffs = state.coeffs if factors is None else state.coeffs * np.asarray(factors)
    frame = state.qubit_frame[:qubit] + state.qubit_frame[qubit + 1 :]
    return canonicalize(
        _evolve(state, coeffs=coeffs, bits=np.delete(state.bits, qubit, axis=1), qubit_frame=frame)
    )


def remove_qubit(state: HybridState, qubit: int) -> HybridState:
    """Remove a qubit that has the same value on every branch."""
    _check_qubit(state, qubit)
    col = state.bits[:, qubit]
    if np.any(col != col[0]):
        raise ValueError(f"qubit {qubit} is not in a computational basis state")
    return drop_qubit(state, qubit)


def tensor(a: HybridState, b: HybridState) -> HybridState:
    """a (x) b with a's qubits and modes first."""
    ka, kb = a.n_branches, b.n_branches
    coeffs = np.outer(a.coeffs, b.coeffs).reshape(-1)
    bits = np.concatenate(
        [np.repeat(a.bits, kb, axis=0), np.tile(b.bits, (ka, 1))], axis=1
    )
    amps = np.concatenate(
        [np.repeat(a.amps, kb, axis=0), np.tile(b.amps, (ka, 1))], axis=1
    )
    return canonicalize(
        HybridState(
            coeffs,
            bits,
            amps,
            qubit_frame=a.qubit_frame + b.qubit_frame,
            mode_frame=a.mode_frame + b.mode_frame,
            controlled_rotations=a.controlled_rotations + b.controlled_rotations,
        )
    )


def set_qubit_frame(state: HybridState, qubit: int, op: str) -> HybridState:
    """Multiply a pending correction into one qubit's frame entry."""
    _check_qubit(state, qubit)
    frame = list(state.qubit_frame)
    frame[qubit] = compose_frame(frame[qubit], op)
    return _evolve(state, qubit_frame=tuple(frame))


def set_mode_frame(state: HybridState, mode: int, op: str) -> HybridState:
    _check_mode(state, mode)
    frame = list(state.mode_frame)
    frame[mode] = compose_frame(frame[mode], op)
    return _evolve(state, mode_frame=tuple(frame))


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)


def z_rotation(phi: float) -> np.ndarray:
    """exp(-i phi Z)."""
    return np.diag([np.exp(-1j * phi), np.exp(1j * phi)])


def flush_frame(state: HybridState, qubit: int | None = None) -> HybridState:
    """Apply pending qubit-frame corrections as real gates and clear them.

    Flushes one qubit, or all of them when ``qubit`` is None. Pending
    corrections on bus modes stay put; they move onto a qubit when the mode
    is teleported back.
    """
    qubits = range(state.n_qubits) if qubit is None else [qubit]
    for q in qubits:
        op = state.qubit_frame[q]
        if "X" in op:
            state = apply_qubit_unitary(state, q, PAULI_X)
        if "Z" in op:
            state = apply_qubit_unitary(state, q, PAULI_Z)
        if op != "I":
            frame = list(state.qubit_frame)
            frame[q] = "I"
            state = _evolve(state, qubit_frame=tuple(frame))
    return state
