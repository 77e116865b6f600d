"""Touched-circuit model: RC threshold delays and their sensitivities.

A touch adds a single capacitor (the human body) between the touched node and
ground, so every touched circuit is a one-pole RC network. Its capacitor voltage is
``v_in * (1 - exp(-t / (R_th * c)))`` where ``R_th`` is the Thevenin resistance seen
by the capacitor, and the delay follows in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .selection import SpanningTree

CAPACITOR = "capacitor_node"
CONNECTION = "connection_node"


class ThresholdUnreachable(ValueError):
    pass


@dataclass(frozen=True)
class CircuitSpec:
    v_in: float = 5.0
    v_thres: float = 2.5
    human_capacitance: float = 100e-12
    send_resistance: float = 1e6
    observation: str = CAPACITOR

    def __post_init__(self):
        if not 0 < self.v_thres < self.v_in:
            raise ValueError("need 0 < v_thres < v_in")
        if self.human_capacitance <= 0:
            raise ValueError("human_capacitance must be positive")
        if self.send_resistance < 0:
            raise ValueError("send_resistance must be non-negative")
        if self.observation not in (CAPACITOR, CONNECTION):
            raise ValueError(f"unknown observation point: {self.observation}")

    @property
    def log_factor(self) -> float:
        """ln(v_in / (v_in - v_thres)); delay per unit time constant."""
        return math.log(self.v_in / (self.v_in - self.v_thres))


def required_link_resistance(separation: float, spec: CircuitSpec) -> float:
    """Series resistance step that separates consecutive delays by ``separation``."""
    return separation / (spec.human_capacitance * spec.log_factor)


# ---------------------------------------------------------------------------
# tree paths and series reduction
# ---------------------------------------------------------------------------


def tree_path(tree: SpanningTree, a: int, b: int) -> list[int]:
    """Edge indices on the unique tree path from a to b, ordered from a."""
    nbrs = tree.neighbors()
    parent = {a: (None, None)}
    stack = [a]
    while stack:
        u = stack.pop()
        if u == b:
            break
        for v, k in nbrs[u]:
            if v not in parent:
                parent[v] = (u, k)
                stack.append(v)
    edges = []
    node = b
    while node != a:
        node, k = parent[node]
        edges.append(k)
    return edges[::-1]


def path_matrix(tree: SpanningTree) -> np.ndarray:
    """(N, E) 0/1 matrix: row i marks edges between the connection node and i."""
    n, m = tree.n_nodes, len(tree.edges)
    mat = np.zeros((n, m))
    nbrs = tree.neighbors()
    root = tree.connection_node
    on_path = {root: []}
    stack = [root]
    while stack:
        u = stack.pop()
        for v, k in nbrs[u]:
            if v not in on_path:
                on_path[v] = on_path[u] + [k]
                stack.append(v)
    for i, edges in on_path.items():
        mat[i, edges] = 1.0
    return mat


def _active_edges(tree: SpanningTree, touched: int) -> set[int]:
    conns = tree.connection_nodes()
    if len(conns) == 1:
        return set(tree_path(tree, conns[0], touched))
    loop = tree_path(tree, conns[0], conns[1])
    loop_nodes = {conns[0]}
    for k in loop:
        loop_nodes.update(tree.edges[k])
    # shortest route from the touched node onto the loop
    best: Optional[list[int]] = None
    for node in loop_nodes:
        p = tree_path(tree, touched, node)
        if best is None or len(p) < len(best):
            best = p
    return set(loop) | set(best)


@dataclass(frozen=True)
class SeriesReduction:
    touched: int
    n_edges: int
    segments: list[tuple[int, ...]]
    edge_to_segment: dict[int, int]

    @property
    def n_symbols(self) -> int:
        return len(self.segments)

    def reduce(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.array([r[list(seg)].sum() for seg in self.segments])


def series_reduce(tree: SpanningTree, touched: int) -> SeriesReduction:
    """Collapse the current-carrying edges of a touched circuit into series segments.

    Segments break at terminals (touched node, connection nodes) and at tree branch
    vertices (degree >= 3); edges that carry no current are left out of the mapping.
    """
    active = _active_edges(tree, touched)
    degree = tree.degrees()
    terminals = {touched, *tree.connection_nodes()}
    incident: dict[int, list[int]] = {}
    for k in active:
        for node in tree.edges[k]:
            incident.setdefault(node, []).append(k)

    def is_junction(node: int) -> bool:
        return node in terminals or degree[node] != 2 or len(incident[node]) != 2

    segments = []
    assigned: dict[int, int] = {}
    for k in sorted(active):
        if k in assigned:
            continue
        seg = {k}
        frontier = list(tree.edges[k])
        while frontier:
            node = frontier.pop()
            if is_junction(node):
                continue
            for k2 in incident[node]:
                if k2 not in seg:
                    seg.add(k2)
                    frontier.extend(n for n in tree.edges[k2] if n != node)
        idx = len(segments)
        segments.append(tuple(sorted(seg)))
        for k2 in seg:
            assigned[k2] = idx
    return SeriesReduction(touched, len(tree.edges), segments, assigned)


def distribute_gradient(reduction: SeriesReduction, segment_grads) -> np.ndarray:
    """Spread each segment's gradient evenly over its member edges."""
    out = np.zeros(reduction.n_edges)
    for seg, g in zip(reduction.segments, segment_grads):
        out[list(seg)] = g / len(seg)
    return out


# ---------------------------------------------------------------------------
# touched circuits and nodal analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TouchedCircuit:
    """Step source -> send resistor -> connection node(s) -> resistor tree -> C."""

    tree: SpanningTree
    spec: CircuitSpec
    touched: int

    def node_map(self) -> tuple[list[int], int]:
        """Map tree nodes to reduced nodal indices; index ``-1`` is the source terminal."""
        conns = self.tree.connection_nodes()
        n = self.tree.n_nodes
        label = list(range(n))
        for c in conns[1:]:
            label[c] = conns[0]
        if self.spec.send_resistance == 0:
            label = [-1 if x == conns[0] else x for x in label]
        uniq = sorted({x for x in label if x >= 0})
        index = {x: i for i, x in enumerate(uniq)}
        return [index.get(x, -1) for x in label], len(uniq)

    def resistors(self, r) -> list[tuple[int, int, float, int]]:
        """(node a, node b, resistance, edge index or -1) over reduced indices."""
        mapping, _ = self.node_map()
        out = []
        for k, (u, v) in enumerate(self.tree.edges):
            a, b = mapping[u], mapping[v]
            if a != b:
                out.append((a, b, float(r[k]), k))
        c = mapping[self.tree.connection_node]
        if c >= 0:
            out.append((c, -1, self.spec.send_resistance, -1))
        return out


def build_touched_circuit(tree: SpanningTree, spec: CircuitSpec, touched: int) -> TouchedCircuit:
    if not 0 <= touched < tree.n_nodes:
        raise ValueError(f"touched node {touched} not in tree")
    return TouchedCircuit(tree, spec, touched)


def _conductance_matrix(resistors, size):
    G = np.zeros((size, size))
    for a, b, res, _ in resistors:
        g = 1.0 / res
        if a >= 0:
            G[a, a] += g
        if b >= 0:
            G[b, b] += g
        if a >= 0 and b >= 0:
            G[a, b] -= g
            G[b, a] -= g
    return G


def _branch_currents(resistors, volts, n_edges):
    cur = np.zeros(n_edges)
    for a, b, res, k in resistors:
        if k >= 0:
            va = volts[a] if a >= 0 else 0.0
            vb = volts[b] if b >= 0 else 0.0
            cur[k] = (va - vb) / res
    return cur


def _nodal_response(circuit: TouchedCircuit, r):
    """Transfer resistances Z_ii, Z_ci and their gradients w.r.t. every tree edge.

    Uses the adjoint identity dZ_ab/dr_e = I_e(a) * I_e(b), where I_e(x) is the edge
    current for a unit current injected at x with the source terminal grounded.
    """
    mapping, size = circuit.node_map()
    m = len(circuit.tree.edges)
    i_node = mapping[circuit.touched]
    c_node = mapping[circuit.tree.connection_node]
    if i_node < 0:
        zero = np.zeros(m)
        return 0.0, 0.0, zero, zero
    resistors = circuit.resistors(r)
    G = _conductance_matrix(resistors, size)
    rhs = np.zeros((size, 2))
    rhs[i_node, 0] = 1.0
    if c_node >= 0:
        rhs[c_node, 1] = 1.0
    volts = np.linalg.solve(G, rhs)
    cur_i = _branch_currents(resistors, volts[:, 0], m)
    cur_c = _branch_currents(resistors, volts[:, 1], m)
    z_ii = volts[i_node, 0]
    z_ci = volts[c_node, 0] if c_node >= 0 else 0.0
    return z_ii, z_ci, cur_i * cur_i, cur_i * cur_c


def _delay_from_transfer(spec: CircuitSpec, z_ii, z_ci):
    """Closed-form delay, plus d(delay)/d(z_ii) and d(delay)/d(z_ci)."""
    c = spec.human_capacitance
    tau = z_ii * c
    if not math.isfinite(tau):
        raise ThresholdUnreachable("non-finite time constant")
    if spec.observation == CAPACITOR:
        return tau * spec.log_factor, c * spec.log_factor, 0.0
    # observed voltage: v_in * (1 - k * exp(-t / tau)), k = z_ci / z_ii
    q = 1.0 - spec.v_thres / spec.v_in
    if z_ii <= 0:
        return 0.0, 0.0, 0.0
    k = z_ci / z_ii
    if k <= q:
        return 0.0, 0.0, 0.0
    t = tau * math.log(k / q)
    dt_dzii = c * math.log(k / q) - c
    dt_dzci = tau / z_ci
    return t, dt_dzii, dt_dzci


class DelayModel:
    """Delays and gradients for every touched node of one tree.

    Single-connection trees use precomputed path sums; two-connection circuits fall
    back to nodal analysis.
    """

    def __init__(self, tree: SpanningTree, spec: CircuitSpec):
        self.tree = tree
        self.spec = spec
        self.n_nodes = tree.n_nodes
        self.n_edges = len(tree.edges)
        self.single = tree.second_connection is None
        self.paths = path_matrix(tree) if self.single else None
        self._reductions: Optional[list[SeriesReduction]] = None

    @property
    def reductions(self) -> list[SeriesReduction]:
        if self._reductions is None:
            self._reductions = [series_reduce(self.tree, i) for i in range(self.n_nodes)]
        return self._reductions

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape != (self.n_edges,):
            raise ValueError(f"expected {self.n_edges} resistances, got shape {r.shape}")
        if np.any(r <= 0) or not np.all(np.isfinite(r)):
            raise ValueError("resistances must be finite and positive")
        return r

    def delays(self, r) -> np.ndarray:
        r = self._check(r)
        if not self.single:
            return np.array([self._nodal(r, i)[0] for i in range(self.n_nodes)])
        spec = self.spec
        rs = spec.send_resistance
        r_tot = rs + self.paths @ r
        c = spec.human_capacitance
        if spec.observation == CAPACITOR:
            return r_tot * c * spec.log_factor
        q = 1.0 - spec.v_thres / spec.v_in
        out = np.zeros(self.n_nodes)
        if rs > 0:
            k = rs / r_tot
            hit = k > q
            out[hit] = r_tot[hit] * c * np.log(k[hit] / q)
        return out

    def gradients(self, r) -> np.ndarray:
        """(N, E) matrix of exact d t_i / d r_e."""
        r = self._check(r)
        if not self.single:
            return np.array([self._nodal(r, i)[1] for i in range(self.n_nodes)])
        spec = self.spec
        c = spec.human_capacitance
        if spec.observation == CAPACITOR:
            return self.paths * (c * spec.log_factor)
        rs = spec.send_resistance
        r_tot = rs + self.paths @ r
        q = 1.0 - spec.v_thres / spec.v_in
        scale = np.zeros(self.n_nodes)
        if rs > 0:
            k = rs / r_tot
            hit = k > q
            scale[hit] = c * (np.log(k[hit] / q) - 1.0)
        return self.paths * scale[:, None]

    def _nodal(self, r, touched):
        circuit = TouchedCircuit(self.tree, self.spec, touched)
        z_ii, z_ci, dz_ii, dz_ci = _nodal_response(circuit, r)
        t, a, b = _delay_from_transfer(self.spec, z_ii, z_ci)
        return t, a * dz_ii + b * dz_ci

    def node_gradient(self, r, touched: int) -> np.ndarray:
        if self.single:
            return self.gradients(r)[touched]
        return self._nodal(self._check(r), touched)[1]

    def distributed_gradient(self, r, touched: int) -> np.ndarray:
        """Gradient of one node's delay after series reduction and even redistribution.

        Members of a series segment share one current, so any member's exact
        derivative is the derivative with respect to the combined resistance.
        """
        grad = self.node_gradient(r, touched)
        red = self.reductions[touched]
        return distribute_gradient(red, [grad[seg[0]] for seg in red.segments])


def delay(tree: SpanningTree, r, spec: CircuitSpec, touched: int) -> float:
    """Threshold-crossing time (s) when ``touched`` is touched."""
    return float(DelayModel(tree, spec).delays(r)[touched])


def delay_gradient(tree: SpanningTree, r, spec: CircuitSpec, touched: int) -> np.ndarray:
    return DelayModel(tree, spec).gradients(r)[touched]


@dataclass(frozen=True)
class DelayProfile:
    delays: np.ndarray
    pairwise_diffs: np.ndarray
    min_diff: float
    bottleneck_pair: Optional[tuple[int, int]]

    def to_json(self) -> dict:
        return {
            "delays": [float(x) for x in self.delays],
            "min_diff": None if math.isinf(self.min_diff) else float(self.min_diff),
            "bottleneck_pair": None if self.bottleneck_pair is None else list(self.bottleneck_pair),
        }


def profile_from_delays(delays) -> DelayProfile:
    delays = np.asarray(delays, dtype=float)
    diffs = np.abs(delays[:, None] - delays[None, :])
    n = len(delays)
    if n < 2:
        return DelayProfile(delays, diffs, math.inf, None)
    iu, ju = np.triu_indices(n, k=1)
    flat = diffs[iu, ju]
    low = float(flat.min())
    # gaps equal up to rounding (relative to the delay scale) are ties;
    # triu order is lexicographic in (i, j), so the first one wins
    k = int(np.argmax(flat <= low + 1e-12 * float(np.abs(delays).max())))
    return DelayProfile(delays, diffs, low, (int(iu[k]), int(ju[k])))


def delay_profile(tree: SpanningTree, r, spec: CircuitSpec) -> DelayProfile:
    return profile_from_delays(DelayModel(tree, spec).delays(r))


# ---------------------------------------------------------------------------
# numerical transient oracle
# ---------------------------------------------------------------------------


def _mna_capacitor_response(circuit: TouchedCircuit, r):
    """Capacitor current and observed voltage as affine functions of the capacitor voltage.

    Full modified nodal analysis with an explicit source branch; the capacitor is
    replaced by a voltage source so the resistive network is solved twice (v_c = 0, 1).
    """
    tree, spec = circuit.tree, circuit.spec
    n = tree.n_nodes
    src = n  # node driven by the ideal step source
    branches = [(u, v, float(r[k])) for k, (u, v) in enumerate(tree.edges)]
    conns = tree.connection_nodes()
    shorts = []
    if spec.send_resistance > 0:
        branches.append((src, conns[0], spec.send_resistance))
    else:
        shorts.append((src, conns[0]))
    for c in conns[1:]:
        shorts.append((conns[0], c))
    # unknowns: n+1 node voltages, source current, short currents, capacitor-source current
    n_nodes = n + 1
    n_vs = 1 + len(shorts) + 1
    size = n_nodes + n_vs
    A = np.zeros((size, size))
    for a, b, res in branches:
        g = 1.0 / res
        A[a, a] += g
        A[b, b] += g
        A[a, b] -= g
        A[b, a] -= g
    sources = [(src, None)] + [(a, b) for a, b in shorts] + [(circuit.touched, None)]
    for j, (a, b) in enumerate(sources):
        row = n_nodes + j
        A[a, row] += 1.0
        A[row, a] += 1.0
        if b is not None:
            A[b, row] -= 1.0
            A[row, b] -= 1.0
    obs = circuit.touched if spec.observation == CAPACITOR else conns[0]
    out = []
    for vc in (0.0, 1.0):
        rhs = np.zeros(size)
        rhs[n_nodes] = spec.v_in
        rhs[size - 1] = vc
        x = np.linalg.solve(A, rhs)
        # KCL rows carry the source current as leaving the node, i.e. into the capacitor
        out.append((x[size - 1], x[obs]))
    (i0, v0), (i1, v1) = out
    return i0, i1 - i0, v0, v1 - v0


@dataclass(frozen=True)
class TransientResult:
    times: np.ndarray
    capacitor_voltage: np.ndarray
    observed_voltage: np.ndarray
    crossing: float


def simulate_transient_oracle(circuit: TouchedCircuit, r, dt: float, horizon: float,
                              check_step: bool = True) -> TransientResult:
    """RK4 integration of the single-state circuit ODE from v_c(0) = 0."""
    spec = circuit.spec
    i0, i_slope, v0, v_slope = _mna_capacitor_response(circuit, r)
    c = spec.human_capacitance
    if i_slope < 0:
        tau = -c / i_slope
        if check_step and dt > tau / 1000:
            raise ValueError(f"dt={dt} exceeds tau/1000={tau / 1000}")

    def f(v):
        return (i0 + i_slope * v) / c

    steps = int(math.ceil(horizon / dt - 1e-9))
    times = np.arange(steps + 1) * dt
    vc = np.zeros(steps + 1)
    v = 0.0
    if i_slope == -math.inf:
        vc[:] = spec.v_in
    else:
        for s in range(steps):
            k1 = f(v)
            k2 = f(v + 0.5 * dt * k1)
            k3 = f(v + 0.5 * dt * k2)
            k4 = f(v + dt * k3)
            v = v + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            vc[s + 1] = v
    observed = v0 + v_slope * vc
    above = np.nonzero(observed >= spec.v_thres)[0]
    if len(above) == 0:
        raise ThresholdUnreachable(f"threshold not crossed within horizon {horizon}")
    j = int(above[0])
    if j == 0:
        crossing = 0.0
    else:
        a, b = observed[j - 1], observed[j]
        crossing = times[j - 1] + (spec.v_thres - a) / (b - a) * dt
    return TransientResult(times, vc, observed, float(crossing))
