"""
Local cost suites ``f_i = (1/m) sum_j f_ij`` with gradients, Hessians and
centralized ground truth.

States are handled node-major as arrays of shape ``(n, p)``; the stacked
vector in R^{np} is ``X.reshape(-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize


@dataclass(frozen=True)
class LocalObjective:
    dim: int
    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]


class Optimum(NamedTuple):
    x: np.ndarray
    value: float


class Gap(NamedTuple):
    gap: float
    consensus_error: float


@dataclass(frozen=True)
class Assumption1Check:
    ok: bool
    min_eigenvalue: float
    witness: np.ndarray | None = None

    def __bool__(self):
        return self.ok


class NodeCostSuite:
    """n local objectives of a common dimension p.

    Subclasses override the vectorized evaluators; the base class loops over
    a list of :class:`LocalObjective`.
    """

    def __init__(self, objectives: list[LocalObjective] | None = None):
        self.objectives = objectives
        if objectives is not None:
            dims = {o.dim for o in objectives}
            if len(dims) != 1:
                raise ValueError("all local objectives must share one dimension")
            self.n, self.p = len(objectives), dims.pop()

    def local(self, i: int) -> LocalObjective:
        return self.objectives[i]

    def values(self, X) -> np.ndarray:
        X = self._check(X)
        return np.array([self.local(i).value(X[i]) for i in range(self.n)])

    def grad(self, X) -> np.ndarray:
        X = self._check(X)
        return np.array([self.local(i).grad(X[i]) for i in range(self.n)]).reshape(self.n, self.p)

    def hess(self, X) -> np.ndarray:
        X = self._check(X)
        return np.array([self.local(i).hess(X[i]) for i in range(self.n)]).reshape(self.n, self.p, self.p)

    def hvp(self, X, V) -> np.ndarray:
        """Per-node Hessian-vector products ``hess_i(X_i) @ V_i``."""
        return np.einsum("ijk,ik->ij", self.hess(X), np.asarray(V).reshape(self.n, self.p))

    def global_value(self, x) -> float:
        """``F(x) = mean_i f_i(x)`` at a common point ``x`` in R^p."""
        x = np.asarray(x, dtype=float).reshape(self.p)
        return float(self.values(np.tile(x, (self.n, 1))).mean())

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        return X.reshape(self.n, self.p)

    def _optimum(self) -> Optimum:
        if self.p != 1:
            raise NotImplementedError("generic optimum search is only provided for p = 1")
        return grid_minimize(np.vectorize(self.global_value), lambda x: self.grad(np.full((self.n, 1), x)).mean(),
                             lambda x: self.hess(np.full((self.n, 1), x)).mean())

    @cached_property
    def optimum(self) -> Optimum:
        return self._optimum()


def grid_minimize(F, dF, d2F, lo=-10.0, hi=10.0, num=100_000) -> Optimum:
    """Global minimum of a vectorized scalar ``F``: dense grid, then Newton polish."""
    grid = np.linspace(lo, hi, num)
    vals = F(grid)
    k = int(np.argmin(vals))
    if k in (0, num - 1):
        raise ValueError(f"minimum sits on the grid boundary [{lo}, {hi}]; enlarge the domain")
    x = grid[k]
    step = grid[1] - grid[0]
    for _ in range(50):
        curv = d2F(x)
        if curv <= 0:
            break
        dx = dF(x) / curv
        if abs(dx) > step:
            dx = np.sign(dx) * step
        x -= dx
        if abs(dx) < 1e-15 * max(1.0, abs(x)):
            break
    return Optimum(np.array([x]), float(F(x)))


# -- linear regression -------------------------------------------------------

@dataclass(frozen=True)
class RegressionData:
    """Per-node data: ``chi[i]`` has shape (m_i, 2), ``y[i]`` shape (m_i,)."""

    chi: tuple
    y: tuple
    seed: int | None = None

    def __post_init__(self):
        if len(self.chi) != len(self.y):
            raise ValueError("chi and y must list the same nodes")
        for c, t in zip(self.chi, self.y):
            if len(c) < 1 or len(c) != len(t):
                raise ValueError("every node needs m_i >= 1 matching points")

    @property
    def n(self):
        return len(self.chi)

    def to_json(self) -> dict:
        return {"seed": self.seed,
                "nodes": [{"chi": np.asarray(c).tolist(), "y": np.asarray(t).tolist()}
                          for c, t in zip(self.chi, self.y)]}

    @classmethod
    def from_json(cls, doc):
        return cls(tuple(np.asarray(d["chi"], float) for d in doc["nodes"]),
                   tuple(np.asarray(d["y"], float) for d in doc["nodes"]), doc.get("seed"))


def generate_regression_data(n=10, m=100, m_i=50, slope=(1.0, 0.0), intercept=1.0,
                             noise=0.1, chi_range=(-1.0, 1.0), seed=None) -> RegressionData:
    """m noisy points from ``y = slope . chi + intercept``; each node draws m_i of them."""
    rng = np.random.default_rng(seed)
    chi = rng.uniform(*chi_range, size=(m, 2))
    y = chi @ np.asarray(slope, float) + intercept + noise * rng.standard_normal(m)
    picks = [rng.choice(m, size=m_i, replace=False) for _ in range(n)]
    return RegressionData(tuple(chi[k] for k in picks), tuple(y[k] for k in picks), seed)


class RegressionSuite(NodeCostSuite):
    """``f_i(beta, nu) = mean_j (beta . chi_j - nu - y_j)^2`` with state ``[beta; nu]``."""

    def __init__(self, data: RegressionData):
        super().__init__()
        self.data = data
        self.n, self.p = data.n, 3
        Q, c, s = [], [], []
        for chi, y in zip(data.chi, data.y):
            Z = np.column_stack([chi, -np.ones(len(y))])
            Q.append(2 * Z.T @ Z / len(y))
            c.append(2 * Z.T @ y / len(y))
            s.append(y @ y / len(y))
        self.Q, self.c, self.s = np.array(Q), np.array(c), np.array(s)

    def local(self, i):
        Q, c, s = self.Q[i], self.c[i], self.s[i]
        return LocalObjective(3, lambda x: float(0.5 * x @ Q @ x - c @ x + s),
                              lambda x: Q @ x - c, lambda x: Q.copy())

    def values(self, X):
        X = self._check(X)
        return 0.5 * np.einsum("ij,ijk,ik->i", X, self.Q, X) - np.einsum("ij,ij->i", self.c, X) + self.s

    def grad(self, X):
        return np.einsum("ijk,ik->ij", self.Q, self._check(X)) - self.c

    def hess(self, X):
        return self.Q.copy()

    def hvp(self, X, V):
        return np.einsum("ijk,ik->ij", self.Q, np.asarray(V).reshape(self.n, self.p))

    def _optimum(self):
        # minimum-norm solution when the pooled regressors are rank deficient
        x = np.linalg.lstsq(self.Q.sum(axis=0), self.c.sum(axis=0), rcond=None)[0]
        return Optimum(x, self.global_value(x))


# -- synthetic non-convex ----------------------------------------------------

@dataclass(frozen=True)
class NonconvexCoefficients:
    a: np.ndarray
    b: np.ndarray
    seed: int | None = None

    def to_json(self):
        return {"seed": self.seed, "a": self.a.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_json(cls, doc):
        return cls(np.asarray(doc["a"], float), np.asarray(doc["b"], float), doc.get("seed"))


def _zero_sum_draw(rng, shape, bound, max_rounds):
    v = rng.uniform(-bound, bound, shape)
    for _ in range(max_rounds):
        v = v - v.mean()
        v.flat[-1] -= v.sum()
        bad = (np.abs(v) >= bound) | (v == 0)
        if not bad.any():
            return v
        v[bad] = rng.uniform(-bound, bound, int(bad.sum()))
    raise RuntimeError("could not draw zero-sum coefficients inside the range")


def generate_nonconvex_coefficients(n: int, m: int, seed=None, bound: float = 5.0,
                                    max_rounds: int = 1000) -> NonconvexCoefficients:
    """Non-zero coefficients in (-bound, bound) whose a- and b-totals vanish."""
    if n * m < 2:
        raise ValueError("need n*m >= 2 coefficients to balance a zero sum")
    rng = np.random.default_rng(seed)
    a = _zero_sum_draw(rng, (n, m), bound, max_rounds)
    b = _zero_sum_draw(rng, (n, m), bound, max_rounds)
    return NonconvexCoefficients(a, b, seed if isinstance(seed, int) else None)


class NonconvexSuite(NodeCostSuite):
    """``f_ij(x) = 2x^2 + 3 sin^2 x + a_ij cos x + b_ij x`` averaged over j (p = 1)."""

    def __init__(self, coeffs: NonconvexCoefficients):
        super().__init__()
        self.coeffs = coeffs
        self.n, self.p = coeffs.a.shape[0], 1
        self.a_bar = coeffs.a.mean(axis=1)
        self.b_bar = coeffs.b.mean(axis=1)

    def local(self, i):
        a, b = self.a_bar[i], self.b_bar[i]
        return LocalObjective(
            1,
            lambda x: float(2 * x[0]**2 + 3 * np.sin(x[0])**2 + a * np.cos(x[0]) + b * x[0]),
            lambda x: np.array([4 * x[0] + 3 * np.sin(2 * x[0]) - a * np.sin(x[0]) + b]),
            lambda x: np.array([[4 + 6 * np.cos(2 * x[0]) - a * np.cos(x[0])]]),
        )

    def values(self, X):
        x = self._check(X)[:, 0]
        return 2 * x**2 + 3 * np.sin(x)**2 + self.a_bar * np.cos(x) + self.b_bar * x

    def grad(self, X):
        x = self._check(X)[:, 0]
        return (4 * x + 3 * np.sin(2 * x) - self.a_bar * np.sin(x) + self.b_bar)[:, None]

    def hess(self, X):
        return self._hess_diag(self._check(X)[:, 0])[:, None, None]

    def hvp(self, X, V):
        return self._hess_diag(X.reshape(self.n)).reshape(self.n, 1) * V

    def _hess_diag(self, x):
        c = np.cos(x)
        return 12 * c * c - 2 - self.a_bar * c

    def _optimum(self):
        A, B = self.a_bar.mean(), self.b_bar.mean()

        def F(x):
            return 2 * x**2 + 3 * np.sin(x)**2 + A * np.cos(x) + B * x
        return grid_minimize(F, lambda x: 4 * x + 3 * np.sin(2 * x) - A * np.sin(x) + B,
                             lambda x: 4 + 6 * np.cos(2 * x) - A * np.cos(x))


def check_assumption1(suite: NodeCostSuite, samples, tol: float = 0.0) -> Assumption1Check:
    """Check ``sum_i hess f_i(x_i)`` is positive definite at every sample.

    ``samples`` holds stacked states, shape (k, n, p), or consensus points,
    shape (k, p), which are broadcast to every node.
    """
    S = np.asarray(samples, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.ndim == 2:
        S = np.repeat(S[:, None, :], suite.n, axis=1)
    worst = np.inf
    for state in S:
        lam = np.linalg.eigvalsh(suite.hess(state).sum(axis=0)).min()
        worst = min(worst, lam)
        if lam <= tol:
            return Assumption1Check(False, float(lam), state.copy())
    return Assumption1Check(True, float(worst))


def centralized_optimum(suite: NodeCostSuite) -> Optimum:
    return suite.optimum


def optimality_gap(suite: NodeCostSuite, X) -> Gap:
    """``F(mean_i x_i) - F*`` and ``max_i ||x_i - mean||_2``."""
    X = np.asarray(X, dtype=float).reshape(suite.n, suite.p)
    xbar = X.mean(axis=0)
    gap = suite.global_value(xbar) - suite.optimum.value
    return Gap(float(gap), float(np.linalg.norm(X - xbar, axis=1).max()))


def local_minima(suite: NodeCostSuite, i: int, lo=-5.0, hi=5.0, num=20_001) -> list[float]:
    """Interior local minimizers of the scalar ``f_i`` found on a grid, then polished."""
    if suite.p != 1:
        raise NotImplementedError("local minima search is scalar-only")
    f = suite.local(i)
    grid = np.linspace(lo, hi, num)
    vals = np.array([f.value(np.array([x])) for x in grid])
    idx = np.flatnonzero((vals[1:-1] < vals[:-2]) & (vals[1:-1] < vals[2:])) + 1
    out = []
    for k in idx:
        res = optimize.minimize_scalar(lambda x: f.value(np.array([x])),
                                       bracket=(grid[k - 1], grid[k], grid[k + 1]))
        out.append(float(res.x))
    return out
