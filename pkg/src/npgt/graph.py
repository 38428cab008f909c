"""
Weight-balanced directed networks, their Laplacians and switching schedules.

Convention: ``W[i, j] > 0`` means node ``j`` sends to node ``i`` (``j`` is an
in-neighbour of ``i``).  The Laplacian has off-diagonal entries ``W[i, j]``
and diagonal ``-sum_j W[i, j]``, so that ``(L @ z)[i] = sum_j W[i, j] (z_j - z_i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

BALANCE_TOL = 1e-12
ZERO_EIG_TOL = 1e-8
MAX_ROW_SUM = 0.9
MAX_RETRIES = 1000


@dataclass(frozen=True, eq=False)
class DirectedWeightedGraph:
    """Non-negative weighted adjacency matrix with zero diagonal.

    Parameters
    ----------
    weights : ndarray, shape (n, n)
        ``weights[i, j]`` is the weight node ``i`` puts on the value received
        from node ``j``.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError(f"weights must be square, got shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def num_edges(self) -> int:
        """Number of directed links (non-zero off-diagonal weights)."""
        return int(np.count_nonzero(self.weights - np.diag(np.diag(self.weights))))

    def in_neighbors(self, i: int) -> set[int]:
        return {int(j) for j in np.flatnonzero(self.weights[i]) if j != i}

    def out_neighbors(self, i: int) -> set[int]:
        return {int(j) for j in np.flatnonzero(self.weights[:, i]) if j != i}

    def to_json(self) -> dict:
        rows, cols = np.nonzero(self.weights)
        return {
            "n": self.n,
            "edges": [[int(i), int(j), float(self.weights[i, j])] for i, j in zip(rows, cols)],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DirectedWeightedGraph":
        w = np.zeros((doc["n"], doc["n"]))
        for i, j, wij in doc["edges"]:
            w[i, j] = wij
        return cls(w)

    def __eq__(self, other):
        if not isinstance(other, DirectedWeightedGraph):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    __hash__ = None


@dataclass(frozen=True)
class ValidationReport:
    weight_balanced: bool
    strongly_connected: bool
    row_sums_below_one: bool

    def __bool__(self):
        return self.weight_balanced and self.strongly_connected and self.row_sums_below_one

    def as_tuple(self):
        return (self.weight_balanced, self.strongly_connected, self.row_sums_below_one)


def is_strongly_connected(weights: np.ndarray) -> bool:
    w = np.asarray(weights)
    if w.shape[0] <= 1:
        return True
    n_comp, _ = connected_components(w != 0, directed=True, connection="strong")
    return n_comp == 1


def validate(g: DirectedWeightedGraph) -> ValidationReport:
    """Report weight balance, strong connectivity and the row-sum bound.

    Never raises; a graph with negative weights or a non-zero diagonal is
    reported as not weight balanced.
    """
    w = g.weights
    well_formed = bool(np.all(w >= 0) and np.all(np.diag(w) == 0))
    balanced = well_formed and bool(
        np.all(np.abs(w.sum(axis=1) - w.sum(axis=0)) <= BALANCE_TOL)
    )
    return ValidationReport(
        weight_balanced=balanced,
        strongly_connected=is_strongly_connected(w),
        row_sums_below_one=bool(np.all(w.sum(axis=1) < 1.0)),
    )


def build_laplacian(g: DirectedWeightedGraph) -> np.ndarray:
    """Laplacian with the diagonal set to minus the row sums.

    For weight-balanced graphs the column sums vanish as well.
    """
    w = g.weights
    if np.any(w < 0):
        raise ValueError("graph has negative weights")
    if np.any(np.diag(w) != 0):
        raise ValueError("graph has a non-zero diagonal")
    return w - np.diag(w.sum(axis=1))


def _uniform_weight(weight, max_degree):
    if max_degree == 0:
        return 0.0 if weight is None else float(weight)
    cap = MAX_ROW_SUM / max_degree
    if weight is None or weight * max_degree > MAX_ROW_SUM:
        return cap
    return float(weight)


def generate_er_wb(n: int, link_prob: float, weight: float | None = None, seed=None,
                   max_retries: int = MAX_RETRIES) -> DirectedWeightedGraph:
    """Sample a symmetric (hence weight-balanced) connected Erdos-Renyi graph.

    Parameters
    ----------
    n : int
        Number of nodes.
    link_prob : float
        Probability of each undirected link, in (0, 1].
    weight : float, optional
        Uniform link weight.  Defaults to ``0.9 / max_degree``; a larger
        value is rescaled down to that cap.
    seed : int or numpy Generator
        The sample is a pure function of the seed.
    max_retries : int
        Samples drawn before giving up on strong connectivity.
    """
    if not 0 < link_prob <= 1:
        raise ValueError(f"link_prob must lie in (0, 1], got {link_prob}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, k=1)
    for _ in range(max_retries):
        adj = np.zeros((n, n), dtype=bool)
        adj[iu] = rng.random(len(iu[0])) < link_prob
        adj = adj | adj.T
        if is_strongly_connected(adj):
            w = _uniform_weight(weight, int(adj.sum(axis=1).max(initial=0)))
            return DirectedWeightedGraph(adj * w)
    raise RuntimeError(
        f"no strongly connected ER({n}, {link_prob}) sample in {max_retries} draws"
    )


def exponential_hops(n: int) -> list[int]:
    if n < 2:
        raise ValueError("exponential graphs need n >= 2")
    return [2**k for k in range(int(math.floor(math.log2(n - 1))) + 1)]


def generate_exponential(n: int, weight: float | None = None) -> DirectedWeightedGraph:
    """Directed circulant graph where node i sends to i + 2^k (mod n)."""
    hops = exponential_hops(n)
    w = _uniform_weight(weight, len(hops))
    weights = np.zeros((n, n))
    for i in range(n):
        for hop in hops:
            weights[(i + hop) % n, i] = w
    return DirectedWeightedGraph(weights)


@dataclass(frozen=True)
class LinkFailureEvent:
    time: float
    removed_edges: list[tuple[int, int]]
    requested: int = 0
    shortfall: int = 0

    def to_json(self) -> dict:
        return {
            "time": self.time,
            "removed_edges": [list(e) for e in self.removed_edges],
            "requested": self.requested,
            "shortfall": self.shortfall,
        }


def undirected_pairs(g: DirectedWeightedGraph) -> list[tuple[int, int]]:
    w = g.weights
    rows, cols = np.nonzero(np.triu((w > 0) & (w.T > 0), k=1))
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


def remove_links(g: DirectedWeightedGraph, rate: float, seed=None,
                 time: float = 0.0) -> tuple[DirectedWeightedGraph, LinkFailureEvent]:
    """Drop a fraction of the bidirectional links without losing connectivity.

    Candidate pairs are visited in a random order; a pair whose removal would
    break strong connectivity is skipped.  The quota is ``rate * |E|`` rounded
    to the nearest integer (halves up); any unmet remainder is reported as
    ``shortfall`` on the event.
    """
    if not 0 <= rate < 1:
        raise ValueError(f"rate must lie in [0, 1), got {rate}")
    pairs = undirected_pairs(g)
    quota = int(math.floor(rate * len(pairs) + 0.5))
    w = np.array(g.weights)
    removed = []
    if quota:
        rng = np.random.default_rng(seed)
        for k in rng.permutation(len(pairs)):
            if len(removed) == quota:
                break
            i, j = pairs[k]
            saved = w[i, j], w[j, i]
            w[i, j] = w[j, i] = 0.0
            if is_strongly_connected(w):
                removed.append((i, j))
            else:
                w[i, j], w[j, i] = saved
    event = LinkFailureEvent(time=time, removed_edges=sorted(removed), requested=quota,
                             shortfall=quota - len(removed))
    return DirectedWeightedGraph(w), event


def laplacian_eigenvalues(L: np.ndarray) -> np.ndarray:
    return np.linalg.eigvals(np.asarray(L, dtype=float))


def algebraic_connectivity(L: np.ndarray, tol: float = ZERO_EIG_TOL) -> float:
    """Magnitude of the largest real part among the non-zero Laplacian eigenvalues."""
    L = np.asarray(L, dtype=float)
    if L.shape[0] == 1:
        raise ValueError("a single node has no algebraic connectivity")
    eig = laplacian_eigenvalues(L)
    zero = np.abs(eig) <= tol
    if zero.sum() != 1:
        raise ValueError(f"zero eigenvalue is not simple ({int(zero.sum())} found)")
    return float(abs(eig[~zero].real.max()))


# -- switching ---------------------------------------------------------------

MODES = ("static", "periodic-regenerate", "explicit-sequence")


@dataclass(frozen=True, eq=False)
class SwitchingSchedule:
    """Piecewise-constant assignment of a topology to each time.

    ``static`` uses ``sequence[0]`` forever; ``periodic-regenerate`` draws a
    fresh graph from ``family``/``params`` every ``dwell`` seconds, seeded by
    ``(seed, window index)``; ``explicit-sequence`` switches at the listed
    activation times.
    """

    mode: str
    dwell: float = math.inf
    seed: int = 0
    family: str = "er"
    params: dict = field(default_factory=dict)
    sequence: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "periodic-regenerate" and not (0 < self.dwell < math.inf):
            raise ValueError("periodic schedules need a finite dwell > 0")
        if self.mode in ("static", "explicit-sequence"):
            if not self.sequence:
                raise ValueError(f"{self.mode} schedule needs at least one graph")
            times = [t for t, _ in self.sequence]
            if times[0] != 0:
                raise ValueError("first activation time must be 0")
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("activation times must be strictly increasing")
            for _, g in self.sequence:
                report = validate(g)
                if not (report.weight_balanced and report.strongly_connected):
                    raise ValueError(f"scheduled graph fails validation: {report}")
            object.__setattr__(self, "sequence", tuple(self.sequence))

    @classmethod
    def static(cls, g: DirectedWeightedGraph) -> "SwitchingSchedule":
        return cls(mode="static", sequence=((0.0, g),))

    @classmethod
    def periodic(cls, dwell: float, seed: int, family: str = "er", **params) -> "SwitchingSchedule":
        return cls(mode="periodic-regenerate", dwell=dwell, seed=seed, family=family, params=params)

    @classmethod
    def explicit(cls, sequence) -> "SwitchingSchedule":
        return cls(mode="explicit-sequence", sequence=tuple(sequence))

    @property
    def switch_times(self) -> list[float]:
        """Activation times after t=0 (empty for periodic schedules)."""
        if self.mode == "explicit-sequence":
            return [t for t, _ in self.sequence[1:]]
        return []

    def to_json(self) -> dict:
        doc = {"mode": self.mode, "dwell": None if math.isinf(self.dwell) else self.dwell,
               "seed": self.seed, "family": self.family, "params": dict(self.params)}
        if self.mode != "periodic-regenerate":
            doc["sequence"] = [[t, g.to_json()] for t, g in self.sequence]
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SwitchingSchedule":
        dwell = doc.get("dwell")
        seq = tuple((t, DirectedWeightedGraph.from_json(g)) for t, g in doc.get("sequence", ()))
        return cls(mode=doc["mode"], dwell=math.inf if dwell is None else dwell,
                   seed=doc.get("seed", 0), family=doc.get("family", "er"),
                   params=doc.get("params", {}), sequence=seq)


def topology_index(schedule: SwitchingSchedule, t: float) -> int:
    """Index of the topology active at time ``t`` (window or sequence index)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if schedule.mode == "static":
        return 0
    if schedule.mode == "periodic-regenerate":
        # slack absorbs k*dt round-off at window boundaries
        return int(math.floor(t / schedule.dwell + 1e-9))
    times = [s for s, _ in schedule.sequence]
    return int(np.searchsorted(times, t + 1e-12, side="right") - 1)


def _window_graph(schedule: SwitchingSchedule, k: int) -> DirectedWeightedGraph:
    seed = np.random.SeedSequence([schedule.seed, k])
    params = dict(schedule.params)
    if schedule.family == "er":
        return generate_er_wb(params.pop("n"), params.pop("link_prob"), seed=np.random.default_rng(seed),
                              **params)
    if schedule.family == "exponential":
        return generate_exponential(**params)
    raise ValueError(f"unknown graph family {schedule.family!r}")


def graph_at(schedule: SwitchingSchedule, t: float) -> DirectedWeightedGraph:
    k = topology_index(schedule, t)
    if schedule.mode != "periodic-regenerate":
        return schedule.sequence[k][1]
    cache = schedule._cache
    if k not in cache:
        if len(cache) > 64:
            cache.clear()
        cache[k] = _window_graph(schedule, k)
    return cache[k]
