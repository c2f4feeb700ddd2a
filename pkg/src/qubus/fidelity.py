"""Process fidelities of the teleportation circuits.

Three routes to the same numbers:

* closed forms in x_d (and the post-selection half-width y),
* numerical quadrature over homodyne outcomes of the simulated conditional
  states,
* Monte Carlo runs of the full protocols on Choi-type inputs.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf, erfc, erfcx

from .hybrid_state import (
    PLUS,
    HybridState,
    ProtocolParams,
    add_qubit,
    apply_controlled_rotation,
    fidelity,
    flush_frame,
    inner_product,
)
from .measurement import condition_on_x, grid_span
from .protocols import (
    OutcomeSource,
    _encode,
    apply_correction,
    csign_gate,
    ghz_prepare,
    ideal_csign_resource,
    prepare_csign_resource,
    single_qubit_gate,
    teleport_qubus_to_qubit,
)

SQRT8 = 2.0 * math.sqrt(2.0)


class NoAcceptedTrials(RuntimeError):
    """Every Monte Carlo trial was rejected by post-selection."""


# -- closed forms -----------------------------------------------------------


def teleport_fidelity_closed(x_d):
    """1/2 + erf(x_d / (2 sqrt 2)) / 2."""
    return 0.5 + 0.5 * erf(np.asarray(x_d, dtype=float) / SQRT8)


def _tails(x_d, y):
    x_d = np.asarray(x_d, dtype=float)
    y = np.asarray(y, dtype=float)
    return (2.0 * y - x_d) / SQRT8, (2.0 * y + x_d) / SQRT8


def _postselected_fidelity(x_d, y):
    z1, z2 = _tails(x_d, y)
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = erfc(z1) / (erfc(z1) + erfc(z2))
    # erfc(z2)/erfc(z1) = erfcx(z2)/erfcx(z1) * exp(-x_d y); stays finite when both underflow
    pos = np.maximum(z1, 0.0)
    ratio = erfcx(z2) / erfcx(pos) * np.exp(-np.asarray(x_d, float) * np.asarray(y, float))
    stable = 1.0 / (1.0 + ratio)
    return np.where(z1 > 0, stable, direct)


def teleport_postselected_closed(x_d, y):
    """(success probability, conditional fidelity) for window half-width y."""
    z1, z2 = _tails(x_d, y)
    p = 0.5 * (erfc(z1) + erfc(z2))
    return _as_scalar(p), _as_scalar(_postselected_fidelity(x_d, y))


def csign_fidelity_closed(x_d):
    return _as_scalar(0.25 * (1.0 + erf(np.asarray(x_d, dtype=float) / SQRT8)) ** 2)


def csign_postselected_closed(x_d, y):
    z1, z2 = _tails(x_d, y)
    p = 0.25 * (erfc(z1) + erfc(z2)) ** 2
    return _as_scalar(p), _as_scalar(_postselected_fidelity(x_d, y) ** 2)


def rep_fidelity_closed(n: int, x_d):
    if n < 1:
        raise ValueError("n must be at least 1")
    return _as_scalar((1.0 + erf(np.asarray(x_d, dtype=float) / SQRT8)) ** n / 2.0**n)


def rep_postselected_closed(n: int, x_d, y):
    if n < 1:
        raise ValueError("n must be at least 1")
    z1, z2 = _tails(x_d, y)
    p = (erfc(z1) + erfc(z2)) ** n / 2.0**n
    return _as_scalar(p), _as_scalar(_postselected_fidelity(x_d, y) ** n)


def erfc_bounds(z):
    """Lower and upper bounds on erfc(z) for z > 0.

    2/sqrt(pi) e^{-z^2} / (z + sqrt(z^2 + 2)) < erfc(z) < 2/sqrt(pi) e^{-z^2} / (z + sqrt(z^2 + 4/pi))
    """
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("erfc bounds need z > 0")
    pre = 2.0 / np.sqrt(np.pi) * np.exp(-(z**2))
    lower = pre / (z + np.sqrt(z**2 + 2.0))
    upper = pre / (z + np.sqrt(z**2 + 4.0 / np.pi))
    return _as_scalar(lower), _as_scalar(upper)


def _as_scalar(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def analytic_values(protocol: str, x_d: float, y: float, n: int = 3) -> tuple[float | None, float | None]:
    """(conditional fidelity, success probability) from the closed forms."""
    p, f = teleport_postselected_closed(x_d, y)
    power = {"teleport": 1, "single_qubit": 1, "csign": 2, "repetition": n}.get(protocol)
    if power is None:
        return None, None
    return f**power, p**power


def postselect_contour(x_d: float, target: float, kind: str = "fidelity", power: int = 1) -> float:
    """Smallest y with F_{p,y}^power >= target (``kind="fidelity"``) or
    P^power = target (``kind="probability"``). NaN when unreachable."""
    if kind == "fidelity":
        def g(y):
            return teleport_postselected_closed(x_d, y)[1] ** power - target
    elif kind == "probability":
        def g(y):
            return teleport_postselected_closed(x_d, y)[0] ** power - target
    else:
        raise ValueError(f"unknown contour kind {kind!r}")
    if kind == "fidelity" and g(0.0) >= 0:
        return 0.0
    hi = 1.0
    while g(0.0) * g(hi) > 0:
        hi *= 2
        if hi > 1e3:
            return float("nan")
    return float(brentq(g, 0.0, hi, xtol=1e-12))


# -- Choi-type inputs and targets --------------------------------------------


def choi_input_teleport(params: ProtocolParams) -> HybridState:
    """(|0>|alpha> + |1>|alpha e^{i theta}>)/sqrt(2)."""
    a = params.alpha
    b = a * np.exp(1j * params.theta)
    s = 1 / np.sqrt(2)
    return HybridState.from_branches([(s, [0], [a]), (s, [1], [b])])


def choi_input_csign(params: ProtocolParams) -> HybridState:
    """Two reference qubits entangled with two qubus-logic modes, equal weights."""
    a = params.alpha
    b = a * np.exp(1j * params.theta)
    amp = {0: a, 1: b}
    return HybridState.from_branches(
        [(0.5, [i, j], [amp[i], amp[j]]) for i in (0, 1) for j in (0, 1)]
    )


def bell_target(n_out: int = 1) -> HybridState:
    """(|0>|0...0> + |1>|1...1>)/sqrt(2) on 1 + n_out qubits."""
    s = 1 / np.sqrt(2)
    return HybridState.from_branches([(s, [0] * (n_out + 1), []), (s, [1] * (n_out + 1), [])])


def csign_target() -> HybridState:
    """Choi state of CSIGN on (ref1, ref2, out1, out2)."""
    return HybridState.from_branches(
        [(0.5 * (-1 if i and j else 1), [i, j, i, j], []) for i in (0, 1) for j in (0, 1)]
    )


def ghz_target(n: int) -> HybridState:
    s = 1 / np.sqrt(2)
    return HybridState.from_branches([(s, [0] * n, []), (s, [1] * n, [])])


# -- quadrature --------------------------------------------------------------


def _gauss_legendre(fun, a: float, b: float, panels: int, nodes: np.ndarray, weights: np.ndarray) -> float:
    if b <= a:
        return 0.0
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    xs = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    ws = (half[:, None] * weights[None, :]).ravel()
    return math.fsum(w * fun(x) for x, w in zip(xs, ws))


def teleport_fidelity_quadrature(
    params: ProtocolParams, tol: float = 1e-10, max_panels: int = 1024
) -> float:
    """Average (conditional, when y > 0) process fidelity by integrating over x.

    The unnormalized conditional state for each outcome x is produced by the
    simulator itself (controlled rotation, projection onto <x|, correction),
    so this checks the circuit rather than re-deriving the formula.
    """
    pre = add_qubit(choi_input_teleport(params), PLUS)
    pre = apply_controlled_rotation(pre, 1, 0, -params.theta)
    target = bell_target(1)

    def fid_density(x):
        cond, _ = apply_correction(condition_on_x(pre, 0, x), 1, x, params)
        return abs(inner_product(target, cond)) ** 2

    def prob_density(x):
        cond = condition_on_x(pre, 0, x)
        return inner_product(cond, cond).real

    lo, hi = grid_span(pre, 0)
    x0, y = params.x_0, params.y
    pieces = [(lo, x0 - y), (x0 + y, hi)]
    nodes, weights = np.polynomial.legendre.leggauss(16)

    def integrate(fun, panels):
        return sum(_gauss_legendre(fun, a, b, panels, nodes, weights) for a, b in pieces)

    panels = 8
    prev_f, prev_p = integrate(fid_density, panels), integrate(prob_density, panels)
    while panels < max_panels:
        panels *= 2
        f, p = integrate(fid_density, panels), integrate(prob_density, panels)
        if abs(f - prev_f) < tol and abs(p - prev_p) < tol:
            return f / p
        prev_f, prev_p = f, p
    raise RuntimeError("fidelity quadrature did not converge")


# -- Monte Carlo ---------------------------------------------------------------


PROTOCOLS = ("teleport", "csign", "repetition", "ghz", "single_qubit")


def run_trial(protocol: str, params: ProtocolParams, n: int, rng: np.random.Generator):
    """One protocol run on its Choi-type input; returns (fidelity, accepted)."""
    source = OutcomeSource(rng=rng)
    if protocol in ("teleport", "single_qubit"):
        state = add_qubit(choi_input_teleport(params), PLUS)
        run = teleport_qubus_to_qubit(state, 0, 1, params, source)
        target = bell_target(1)
    elif protocol == "csign":
        run = csign_gate(
            choi_input_csign(params), 0, 1, ideal_csign_resource(), params, source,
            teleport_back=False,
        )
        target = csign_target()
    elif protocol == "repetition":
        run = _encode(bell_target(1), 1, n, params, source)
        target = bell_target(n)
    elif protocol == "ghz":
        run = ghz_prepare(n, params, source)
        target = ghz_target(n)
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    return fidelity(target, flush_frame(run.state)), run.accepted


def _run_chunk(args):
    protocol, params, n, seed, start, stop = args
    out = []
    for i in range(start, stop):
        rng = np.random.default_rng([seed, i])
        out.append(run_trial(protocol, params, n, rng))
    return out


def protocol_tally(protocol: str, params: ProtocolParams, n: int = 3, seed: int = 0) -> dict:
    """Resources of one complete run of ``protocol`` as deployed (not the
    truncated Choi circuit used for fidelity estimation)."""
    rng = np.random.default_rng([seed, 2**32 - 1])
    if protocol == "teleport":
        state = add_qubit(HybridState.product(modes=[params.alpha]), PLUS)
        tally = teleport_qubus_to_qubit(state, 0, 0, params, rng).tally
        tally.ancilla_qubits += 1
    elif protocol == "single_qubit":
        state = HybridState.product(modes=[params.alpha])
        tally = single_qubit_gate(state, 0, np.eye(2), params, rng).tally
    elif protocol == "csign":
        resource = prepare_csign_resource(params, rng)
        pair = HybridState.product(modes=[params.alpha, params.alpha])
        tally = csign_gate(pair, 0, 1, resource, params, rng).tally
    elif protocol in ("ghz", "repetition"):
        tally = ghz_prepare(n, params, rng).tally
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    return tally.as_dict()


@dataclass
class FidelityReport:
    protocol: str
    alpha: float
    theta: float
    x_d: float
    y: float
    n: int
    n_trials: int
    n_accepted: int
    monte_carlo: float
    mc_stderr: float
    monte_carlo_unconditional: float
    unconditional_stderr: float
    success_prob_empirical: float
    success_prob_interval: tuple[float, float]
    analytic: float | None = None
    success_prob_analytic: float | None = None
    quadrature: float | None = None
    tally: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["success_prob_interval"] = list(self.success_prob_interval)
        return d


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    p = k / n
    denom = 1 + z**2 / n
    centre = (p + z**2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def _mean_and_stderr(values: list[float]) -> tuple[float, float]:
    m = len(values)
    mean = math.fsum(values) / m
    if m < 2:
        return mean, float("nan")
    var = math.fsum((v - mean) ** 2 for v in values) / (m - 1)
    return mean, math.sqrt(var / m)


def process_fidelity_mc(
    protocol: str,
    params: ProtocolParams,
    n_trials: int,
    seed: int = 0,
    n: int = 3,
    workers: int = 1,
    chunk: int = 1000,
    quadrature: bool = False,
) -> FidelityReport:
    """Monte Carlo process fidelity of ``protocol`` over ``n_trials`` runs.

    Trial i draws its outcomes from ``default_rng([seed, i])``, so the result
    does not depend on ``workers`` or the chunking. ``monte_carlo`` averages
    accepted runs only; with y = 0 that is every run.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    jobs = [
        (protocol, params, n, seed, s, min(s + chunk, n_trials)) for s in range(0, n_trials, chunk)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(_run_chunk, jobs) for r in part]
    else:
        results = [r for job in jobs for r in _run_chunk(job)]
    fids = [f for f, _ in results]
    accepted = [f for f, ok in results if ok]
    if not accepted:
        raise NoAcceptedTrials(f"all {n_trials} trials rejected at y={params.y}")
    mc, se = _mean_and_stderr(accepted)
    mc_all, se_all = _mean_and_stderr(fids)
    analytic, p_analytic = analytic_values(protocol, params.x_d, params.y, n)
    quad = teleport_fidelity_quadrature(params) if quadrature and protocol == "teleport" else None
    return FidelityReport(
        protocol=protocol,
        alpha=params.alpha,
        theta=params.theta,
        x_d=params.x_d,
        y=params.y,
        n=n,
        n_trials=n_trials,
        n_accepted=len(accepted),
        monte_carlo=mc,
        mc_stderr=se,
        monte_carlo_unconditional=mc_all,
        unconditional_stderr=se_all,
        success_prob_empirical=len(accepted) / n_trials,
        success_prob_interval=wilson_interval(len(accepted), n_trials),
        analytic=analytic,
        success_prob_analytic=p_analytic,
        quadrature=quad,
        tally=protocol_tally(protocol, params, n, seed),
    )
