"""Teleportation circuits between qubits and qubus modes.

Building blocks are the two one-bit teleportations: qubit -> qubus (a
controlled rotation by theta followed by an X measurement of the qubit) and
qubus -> qubit (a controlled rotation by -theta onto a fresh |+> qubit
followed by homodyne detection of the mode and a conditional correction).
Gates, resource-state preparation and repetition encoding are compositions
of the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .hybrid_state import (
    HADAMARD,
    PAULI_X,
    PAULI_Z,
    PLUS,
    HybridState,
    ProtocolParams,
    add_mode,
    add_qubit,
    apply_controlled_rotation,
    apply_nport_splitter,
    apply_phase_shift,
    apply_qubit_unitary,
    flush_frame,
    set_mode_frame,
    set_qubit_frame,
    tensor,
    z_rotation,
)
from .measurement import (
    HomodyneRecord,
    correction_phase,
    homodyne_measure,
    measure_qubit,
    postselect,
)


@dataclass
class ResourceTally:
    """Physical resources consumed by a protocol run."""

    controlled_rotations: int = 0
    ancilla_qubits: int = 0
    qubit_measurements: int = 0
    homodyne_detections: int = 0

    def __add__(self, other: "ResourceTally") -> "ResourceTally":
        return ResourceTally(
            self.controlled_rotations + other.controlled_rotations,
            self.ancilla_qubits + other.ancilla_qubits,
            self.qubit_measurements + other.qubit_measurements,
            self.homodyne_detections + other.homodyne_detections,
        )

    def as_dict(self) -> dict:
        return {
            "controlled_rotations": self.controlled_rotations,
            "ancilla_qubits": self.ancilla_qubits,
            "qubit_measurements": self.qubit_measurements,
            "homodyne_detections": self.homodyne_detections,
        }


@dataclass
class RunOutcome:
    state: HybridState
    records: list[HomodyneRecord] = field(default_factory=list)
    tally: ResourceTally = field(default_factory=ResourceTally)

    @property
    def accepted(self) -> bool:
        return all(r.accepted for r in self.records)

    def extend(self, other: "RunOutcome") -> "RunOutcome":
        """Adopt ``other``'s state and append its records and tally."""
        return RunOutcome(other.state, self.records + other.records, self.tally + other.tally)


class OutcomeSource:
    """Where measurement outcomes come from.

    Forced outcomes are consumed in order (homodyne values from ``x``, qubit
    results from ``bits``); once a list is exhausted, outcomes are drawn from
    ``rng``.
    """

    def __init__(
        self,
        rng: np.random.Generator | None = None,
        x: Iterable[float] = (),
        bits: Iterable[int] = (),
    ):
        self.rng = rng
        self._x = list(x)
        self._bits = list(bits)

    def next_x(self) -> float | None:
        return self._x.pop(0) if self._x else None

    def next_bit(self) -> int | None:
        return self._bits.pop(0) if self._bits else None


def as_source(source) -> OutcomeSource:
    if isinstance(source, OutcomeSource):
        return source
    if source is None or isinstance(source, np.random.Generator):
        return OutcomeSource(rng=source)
    raise TypeError(f"cannot use {type(source).__name__} as an outcome source")


def teleport_qubit_to_qubus(
    state: HybridState, qubit: int, mode: int, params: ProtocolParams, source=None
) -> RunOutcome:
    """One-bit teleportation of ``qubit`` into bus ``mode``.

    The bus must hold the same coherent state on every branch. On the |->
    outcome the state carries a Z-tilde error, recorded in the mode's frame
    rather than corrected. The qubit is consumed.
    """
    source = as_source(source)
    col = state.amps[:, mode]
    if np.any(np.abs(col - col[0]) > 1e-12):
        raise ValueError(f"bus mode {mode} is not a fresh coherent state")
    state = flush_frame(state, qubit)
    state = apply_controlled_rotation(state, qubit, mode, params.theta)
    outcome, state, _ = measure_qubit(
        state, qubit, basis="X", outcome=source.next_bit(), rng=source.rng, remove=True
    )
    if outcome == 1:
        state = set_mode_frame(state, mode, "Z")
    return RunOutcome(state, [], ResourceTally(controlled_rotations=1, qubit_measurements=1))


def teleport_qubus_to_qubit(
    state: HybridState,
    mode: int,
    qubit: int,
    params: ProtocolParams,
    source=None,
    correct: bool = True,
) -> RunOutcome:
    """One-bit teleportation of bus ``mode`` onto ``qubit`` (prepared in |+>).

    After the -theta controlled rotation the mode is homodyned. For
    x <= x_0 the qubit is corrected with Z_phi(x) followed by X; for x > x_0
    nothing is done. The record is flagged rejected when x falls inside the
    post-selection window. A pending Z-tilde on the mode moves to the qubit.
    """
    source = as_source(source)
    pending = state.mode_frame[mode]
    state = apply_controlled_rotation(state, qubit, mode, -params.theta)
    x, state, _ = homodyne_measure(state, mode, x=source.next_x(), rng=source.rng)
    applied = None
    if correct:
        state, applied = apply_correction(state, qubit, x, params)
    if pending != "I":
        state = set_qubit_frame(state, qubit, pending)
    record = HomodyneRecord(mode, x, postselect(x, params), params.y, applied)
    return RunOutcome(state, [record], ResourceTally(controlled_rotations=1, homodyne_detections=1))


def apply_correction(state: HybridState, qubit: int, x: float, params: ProtocolParams):
    """Z_phi(x) then X on ``qubit`` when x <= x_0; returns (state, label)."""
    if x > params.x_0:
        return state, None
    state = apply_qubit_unitary(state, qubit, z_rotation(correction_phase(x, params)))
    state = apply_qubit_unitary(state, qubit, PAULI_X)
    return state, "XZphi"


def bit_flip(state: HybridState, mode: int, params: ProtocolParams) -> HybridState:
    """Logical X on c0|alpha> + c1|alpha e^{i theta}> via a -theta phase shift."""
    return apply_phase_shift(state, mode, -params.theta)


def single_qubit_gate(
    state: HybridState, mode: int, u, params: ProtocolParams, source=None
) -> RunOutcome:
    """Apply a qubit unitary ``u`` to the logical state held in bus ``mode``.

    Teleports onto a fresh qubit, applies pending corrections and ``u``, and
    teleports back into a fresh bus of amplitude alpha at the same mode index.
    """
    source = as_source(source)
    state = add_qubit(state, PLUS)
    q = state.n_qubits - 1
    run = RunOutcome(state, [], ResourceTally(ancilla_qubits=1))
    run = run.extend(teleport_qubus_to_qubit(run.state, mode, q, params, source))
    state = flush_frame(run.state, q)
    state = apply_qubit_unitary(state, q, u)
    state = add_mode(state, params.alpha, index=mode)
    back = teleport_qubit_to_qubus(state, q, mode, params, source)
    return run.extend(back)


def _encode(
    state: HybridState, qubit: int, n: int, params: ProtocolParams, source: OutcomeSource
) -> RunOutcome:
    """Repetition-encode ``qubit`` into n fresh qubits appended at the end.

    The input qubit is teleported into a bus of amplitude sqrt(n) alpha,
    split over n modes, and each mode is teleported onto its own |+> qubit.
    """
    if n < 1:
        raise ValueError("need at least one output qubit")
    state = add_mode(state, np.sqrt(n) * params.alpha)
    bus = state.n_modes - 1
    run = RunOutcome(state)
    run = run.extend(teleport_qubit_to_qubus(run.state, qubit, bus, params, source))
    state = run.state
    for _ in range(n - 1):
        state = add_mode(state, 0.0)
    state = apply_nport_splitter(state, bus, range(bus + 1, bus + n))
    run = RunOutcome(state, run.records, run.tally)
    for _ in range(n):
        state = add_qubit(run.state, PLUS)
        q = state.n_qubits - 1
        run = RunOutcome(state, run.records, run.tally + ResourceTally(ancilla_qubits=1))
        run = run.extend(teleport_qubus_to_qubit(run.state, bus, q, params, source))
    return run


def _window(params: ProtocolParams, post_select: bool) -> ProtocolParams:
    return params if post_select else replace(params, y=0.0)


def repetition_encode(
    amplitudes: Sequence[complex],
    n: int,
    params: ProtocolParams,
    source=None,
    post_select: bool = True,
) -> RunOutcome:
    """Encode a|0> + b|1> into (approximately) a|0...0> + b|1...1> on n qubits."""
    v = np.asarray(amplitudes, dtype=complex)
    if v.shape != (2,) or abs(np.vdot(v, v).real - 1.0) > 1e-12:
        raise ValueError("input amplitudes must be a normalized 2-vector")
    state = HybridState.product(qubits=[v])
    run = _encode(state, 0, n, _window(params, post_select), as_source(source))
    return RunOutcome(flush_frame(run.state), run.records, run.tally)


def ghz_prepare(
    n: int, params: ProtocolParams, source=None, post_select: bool = True
) -> RunOutcome:
    """(|0...0> + |1...1>)/sqrt(2) on n qubits from one |+> ancilla."""
    state = HybridState.product(qubits=[PLUS])
    run = _encode(state, 0, n, _window(params, post_select), as_source(source))
    tally = run.tally + ResourceTally(ancilla_qubits=1)
    return RunOutcome(flush_frame(run.state), run.records, tally)


CSIGN_RESOURCE = np.array([1, 1, 1, -1], dtype=complex) / 2


def ideal_csign_resource() -> HybridState:
    """(|00> + |01> + |10> - |11>)/2 as an exact two-qubit state."""
    return HybridState.from_branches(
        [(c, [i >> 1, i & 1], []) for i, c in enumerate(CSIGN_RESOURCE)]
    )


def prepare_csign_resource(
    params: ProtocolParams, source=None, post_select: bool = True
) -> RunOutcome:
    """Bell pair from a |+> photon, a sqrt(2) alpha bus and a symmetric splitter,
    then a Hadamard on the second qubit.

    Only the |+> input photon counts as an ancilla; the two receiving qubits
    are the resource itself.
    """
    state = HybridState.product(qubits=[PLUS])
    run = _encode(state, 0, 2, _window(params, post_select), as_source(source))
    state = flush_frame(run.state)
    state = apply_qubit_unitary(state, 1, HADAMARD)
    tally = replace(run.tally, ancilla_qubits=1)
    return RunOutcome(state, run.records, tally)


def csign_pre_correction(
    state: HybridState,
    mode_a: int,
    mode_b: int,
    resource: HybridState,
    params: ProtocolParams,
    source=None,
) -> tuple[RunOutcome, tuple[int, int]]:
    """Rotate and homodyne both modes onto the resource qubits, no corrections.

    Returns the run and the indices of the two resource qubits.
    """
    source = as_source(source)
    state = tensor(state, resource)
    qa, qb = state.n_qubits - 2, state.n_qubits - 1
    state = apply_controlled_rotation(state, qa, mode_a, -params.theta)
    state = apply_controlled_rotation(state, qb, mode_b, -params.theta)
    forced = {mode_a: source.next_x(), mode_b: source.next_x()}
    first, second = sorted([(mode_a, qa), (mode_b, qb)])
    # measure the higher mode index first so the lower index stays valid
    records = {}
    for m, q in (second, first):
        pending = state.mode_frame[m]
        x, state, _ = homodyne_measure(state, m, x=forced[m], rng=source.rng)
        if pending != "I":
            state = set_qubit_frame(state, q, pending)
        records[m] = x
    recs = [
        HomodyneRecord(m, records[m], postselect(records[m], params), params.y, None)
        for m in (mode_a, mode_b)
    ]
    tally = ResourceTally(controlled_rotations=2, homodyne_detections=2)
    return RunOutcome(state, recs, tally), (qa, qb)


def csign_gate(
    state: HybridState,
    mode_a: int,
    mode_b: int,
    resource,
    params: ProtocolParams,
    source=None,
    teleport_back: bool = True,
) -> RunOutcome:
    """CSIGN between the qubus-logic states in ``mode_a`` and ``mode_b``.

    ``resource`` is the two-qubit state (|00>+|01>+|10>-|11>)/2, either as a
    ``HybridState`` or as the ``RunOutcome`` that prepared it (its records
    and tally are then included). Each mode is teleported onto one resource
    qubit and corrected per its own homodyne outcome; with ``teleport_back``
    the outputs return to fresh buses at the original mode indices,
    otherwise they stay on the two last qubits.
    """
    source = as_source(source)
    prior = resource if isinstance(resource, RunOutcome) else RunOutcome(resource)
    if prior.state.n_qubits != 2 or prior.state.n_modes != 0:
        raise ValueError("resource must be a two-qubit state without modes")
    run, (qa, qb) = csign_pre_correction(state, mode_a, mode_b, prior.state, params, source)
    state = run.state
    recs = []
    for rec, q, partner in zip(run.records, (qa, qb), (qb, qa)):
        state, applied = apply_correction(state, q, rec.outcome_x, params)
        if applied is not None:
            # the resource's -|11> sign rides along with the X flip, leaving a
            # Z on the other output that the quadrant table does not list
            state = apply_qubit_unitary(state, partner, PAULI_Z)
        recs.append(replace(rec, correction_applied=applied))
    run = RunOutcome(state, prior.records + recs, prior.tally + run.tally)
    if not teleport_back:
        return run
    state = run.state
    for m in sorted((mode_a, mode_b)):
        state = add_mode(state, params.alpha, index=m)
    run = RunOutcome(state, run.records, run.tally)
    # qb is the last qubit, so consuming it first leaves qa's index intact
    for m, q in ((mode_b, qb), (mode_a, qa)):
        run = run.extend(teleport_qubit_to_qubus(run.state, q, m, params, source))
    return run


LITERATURE_COUNTS = {
    # controlled rotations (or equivalent cat-state ancillas) per gate
    "qubus_logic": {"single_qubit": 2, "csign": 7, "universal": 9},
    "coherent_state_logic": {"single_qubit": 8, "cnot": 8, "universal": 16},
    "small_amplitude_coherent_state_logic": {"z_rotation": 3, "hadamard": 27, "csign": 27},
}


def universal_set_tally(params: ProtocolParams, seed: int = 0) -> dict[str, ResourceTally]:
    """Run one single-qubit gate and one CSIGN (with resource) and count resources."""
    rng = np.random.default_rng(seed)
    logical = HybridState.product(modes=[params.alpha])
    single = single_qubit_gate(logical, 0, HADAMARD, params, rng).tally
    resource = prepare_csign_resource(params, rng)
    pair = HybridState.product(modes=[params.alpha, params.alpha])
    csign = csign_gate(pair, 0, 1, resource, params, rng).tally
    return {"single_qubit": single, "csign": csign, "universal": single + csign}
