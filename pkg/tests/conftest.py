import numpy as np
import pytest

from qubus.hybrid_state import HybridState, ProtocolParams, normalize


def qubit_vector(state: HybridState) -> np.ndarray:
    """Dense qubit-register vector of a state with no modes left."""
    assert state.n_modes == 0
    v = np.zeros(2**state.n_qubits, dtype=complex)
    for c, bits in zip(state.coeffs, state.bits):
        v[int("".join(str(int(b)) for b in bits) or "0", 2)] += c
    return v


def random_state(rng, n_qubits=2, n_modes=2, n_branches=4, scale=1.5) -> HybridState:
    branches = []
    for _ in range(n_branches):
        c = complex(rng.normal(), rng.normal())
        bits = rng.integers(0, 2, n_qubits)
        amps = scale * (rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes))
        branches.append((c, bits, amps))
    return normalize(HybridState.from_branches(branches))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def worked_params():
    """x_d = 2.5 at theta = 0.1, the worked-example regime."""
    return ProtocolParams.from_xd(2.5, theta=0.1)


# acceptance lines, printed once at the end of the session
ACCEPTANCE: dict[str, list[tuple[bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k)):
        parts = ACCEPTANCE[key]
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
