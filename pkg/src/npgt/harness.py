"""
Experiment definitions, post-processing and file output.

Four experiment families are provided (convex regression on a static ER
graph, non-convex zero-sum costs on switching ER graphs, exponential versus
ER topologies, and link-failure sweeps) plus a ``custom`` single run.  Each
experiment is a pure function of its :class:`ExperimentConfig`, so traces
are byte-identical across repeated runs.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy import stats

from . import __version__
from .dynamics import IntegratorConfig, Trajectory, simulate
from .graph import (
    SwitchingSchedule,
    algebraic_connectivity,
    build_laplacian,
    generate_er_wb,
    generate_exponential,
    graph_at,
    remove_links,
    validate,
)
from .nonlinearity import LinkNonlinearity, sector_of, xi_ratio
from .objectives import (
    NonconvexSuite,
    RegressionSuite,
    check_assumption1,
    generate_nonconvex_coefficients,
    generate_regression_data,
    local_minima,
)
from .spectral import eta_bar, hessian_row_norm, spectral_report

log = logging.getLogger(__name__)

EXPERIMENTS = ("regression", "nonconvex-switching", "exponential-vs-er", "link-failure", "custom")
GAP_FLOOR = 1e-14
DEFAULT_SEED = 1
SEED_SET = tuple(range(10))
SCREEN_GRID = np.linspace(-1.0, 1.0, 201)
SCREEN_ATTEMPTS = 100


class ConfigError(ValueError):
    """An experiment configuration violates a precondition."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, JSON-serializable description of one experiment.

    ``dwell=None`` keeps the topology static; ``eta="auto"`` runs at the
    admissible step-rate computed from the initial operating point.
    ``rhos``, ``removal_rates`` and ``er_link_prob`` only matter for the
    sweep experiments that use them.
    """

    experiment: str = "custom"
    objective: str = "regression"
    n: int = 10
    m: int = 100
    m_i: int = 50
    noise: float = 0.1
    topology: str = "er"
    link_prob: float = 0.25
    dwell: float | None = None
    kind: str = "log_quantize"
    rho: float | None = 1 / 256
    c: float | None = None
    z_max: float | None = None
    method: str = "rk4"
    dt: float = 1e-3
    horizon: float = 20.0
    eta: float | str = 2.0
    y_init: str = "gradient"
    record_every: int = 10
    graph_seed: int = DEFAULT_SEED
    data_seed: int = DEFAULT_SEED
    x0_seed: int = DEFAULT_SEED
    rhos: tuple = ()
    removal_rates: tuple = ()
    er_link_prob: float = 0.5
    local_min_node: int | None = None
    out: str | None = None

    def __post_init__(self):
        for name in ("rhos", "removal_rates"):
            object.__setattr__(self, name, tuple(getattr(self, name) or ()))
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.experiment not in EXPERIMENTS:
            out.append(f"experiment must be one of {EXPERIMENTS}")
        if self.objective not in ("regression", "nonconvex"):
            out.append("objective must be 'regression' or 'nonconvex'")
        if self.topology not in ("er", "exponential"):
            out.append("topology must be 'er' or 'exponential'")
        if self.n < 2:
            out.append("n must be at least 2")
        if self.objective == "regression" and not 0 < self.m_i <= self.m:
            out.append("need 0 < m_i <= m")
        for name in ("link_prob", "er_link_prob"):
            if not 0 < getattr(self, name) <= 1:
                out.append(f"{name} must lie in (0, 1]")
        if self.dwell is not None and not self.dwell > 0:
            out.append("dwell must be positive")
        if self.dwell is not None and self.dt > self.dwell:
            out.append("dt must not exceed the dwell time")
        if not (self.eta == "auto" or (isinstance(self.eta, (int, float)) and self.eta >= 0)):
            out.append("eta must be a non-negative number or 'auto'")
        if any(not 0 <= r < 1 for r in self.removal_rates):
            out.append("removal rates must lie in [0, 1)")
        if any(not r > 0 for r in self.rhos):
            out.append("rho values must be positive")
        if self.local_min_node is not None and not 0 <= self.local_min_node < self.n:
            out.append("local_min_node must index a node")
        try:
            self.nonlinearity()
            IntegratorConfig(self.method, self.dt, self.horizon, 0.0, self.y_init, self.record_every)
        except ValueError as err:
            out.append(str(err))
        return out

    def nonlinearity(self, rho=None) -> LinkNonlinearity:
        doc = {"kind": self.kind, "rho": self.rho if rho is None else rho, "c": self.c, "z_max": self.z_max}
        return LinkNonlinearity.from_json(doc)

    def integrator(self, eta: float) -> IntegratorConfig:
        return IntegratorConfig(method=self.method, dt=self.dt, horizon=self.horizon, eta=float(eta),
                                y_init=self.y_init, record_every=self.record_every)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["rhos"] = list(self.rhos)
        doc["removal_rates"] = list(self.removal_rates)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Same experiment with graph, data and x0 seeds derived from one base seed."""
        g, d, x = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
        return replace(self, graph_seed=g, data_seed=d, x0_seed=x)


def default_config(name: str, **overrides) -> ExperimentConfig:
    """Shipped settings of each experiment family."""
    base = {
        "regression": dict(objective="regression", n=10, m=100, m_i=50, link_prob=0.25,
                           rho=1 / 256, eta=2.0, horizon=20.0),
        "nonconvex-switching": dict(objective="nonconvex", n=10, m=40, link_prob=0.2, dwell=1.0,
                                    rho=1 / 128, rhos=(1 / 128, 1 / 512, 1 / 1024), eta=1.0,
                                    horizon=30.0),
        "exponential-vs-er": dict(objective="nonconvex", n=10, m=40, er_link_prob=0.5, dwell=1.0,
                                  rho=1 / 64, eta=2.0, horizon=30.0),
        "link-failure": dict(objective="nonconvex", n=10, m=40, link_prob=0.3, rho=1 / 128,
                             removal_rates=(0.0, 0.1, 0.2, 0.3), eta=1.0, horizon=30.0),
        "custom": {},
    }
    if name not in base:
        raise ConfigError(f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
    return ExperimentConfig(experiment=name, **{**base[name], **overrides})


# -- building blocks ---------------------------------------------------------

@dataclass
class RunSummary:
    final_gap: float
    final_consensus_error: float
    fitted_rate: float | None
    spectral: dict
    events: list = field(default_factory=list)
    label: str = "main"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentResult:
    """Per-run summaries and trajectories, keyed by run label in run order."""

    config: ExperimentConfig
    summaries: dict
    trajectories: dict
    table: list = field(default_factory=list)

    @property
    def summary(self) -> RunSummary:
        return next(iter(self.summaries.values()))

    @property
    def trajectory(self) -> Trajectory:
        return next(iter(self.trajectories.values()))

    def to_json(self) -> dict:
        return {"experiment": self.config.experiment,
                "runs": {k: s.to_json() for k, s in self.summaries.items()},
                "table": self.table}


def fit_rate(trajectory, floor: float = GAP_FLOOR) -> float | None:
    """Least-squares slope of ``log(gap)`` against ``t`` over the final half.

    Accepts a :class:`Trajectory` or a ``(t, gap)`` pair.  Samples from the
    first one at or below ``floor`` onwards are dropped; ``None`` is returned
    when fewer than two samples remain.
    """
    t, gap = (trajectory.t, trajectory.gap) if isinstance(trajectory, Trajectory) else trajectory
    t = np.asarray(t, dtype=float)
    gap = np.asarray(gap, dtype=float)
    window = t >= t[0] + (t[-1] - t[0]) / 2
    t, gap = t[window], gap[window]
    hit = np.flatnonzero(~(gap > floor))
    if hit.size:
        t, gap = t[:hit[0]], gap[:hit[0]]
    if t.size < 2:
        return None
    return float(np.polyfit(t, np.log(gap), 1)[0])


def build_suite(cfg: ExperimentConfig):
    """Cost suite and any data-generation events.

    Non-convex coefficients are redrawn until the aggregate Hessian is
    positive on the consensus screening grid.
    """
    if cfg.objective == "regression":
        data = generate_regression_data(n=cfg.n, m=cfg.m, m_i=cfg.m_i, noise=cfg.noise, seed=cfg.data_seed)
        return RegressionSuite(data), []
    events = []
    for attempt in range(SCREEN_ATTEMPTS):
        seed = cfg.data_seed if attempt == 0 else [cfg.data_seed, attempt]
        suite = NonconvexSuite(generate_nonconvex_coefficients(cfg.n, cfg.m, seed=np.random.SeedSequence(seed)))
        check = check_assumption1(suite, SCREEN_GRID)
        if check.ok:
            return suite, events
        events.append({"event": "assumption1_redraw", "attempt": attempt,
                       "min_eigenvalue": check.min_eigenvalue})
    raise ConfigError(f"no coefficient draw passed the aggregate-Hessian screen in {SCREEN_ATTEMPTS} tries")


def build_schedule(cfg: ExperimentConfig, topology=None, link_prob=None) -> SwitchingSchedule:
    topology = topology or cfg.topology
    link_prob = cfg.link_prob if link_prob is None else link_prob
    if topology == "exponential":
        return SwitchingSchedule.static(generate_exponential(cfg.n))
    if cfg.dwell is None:
        return SwitchingSchedule.static(generate_er_wb(cfg.n, link_prob, seed=cfg.graph_seed))
    return SwitchingSchedule.periodic(cfg.dwell, cfg.graph_seed, "er", n=cfg.n, link_prob=link_prob)


def initial_x(cfg: ExperimentConfig, suite) -> np.ndarray:
    """Uniform draw in [-5, 5]; optionally one node placed at a local minimum of its own cost."""
    rng = np.random.default_rng(cfg.x0_seed)
    while True:
        x0 = rng.uniform(-5.0, 5.0, (suite.n, suite.p))
        if np.linalg.norm(x0 - x0.mean()) > 1e-6:
            break
    if cfg.local_min_node is not None:
        minima = local_minima(suite, cfg.local_min_node)
        if not minima:
            raise ConfigError(f"f_{cfg.local_min_node} has no interior local minimum on [-5, 5]")
        x0[cfg.local_min_node, 0] = max(minima, key=abs)
    return x0


def hessian_bound(suite) -> float:
    """Uniform bound on the block-diagonal Hessian's row sums."""
    if isinstance(suite, NonconvexSuite):
        # |4 + 6 cos 2x - a cos x| <= 10 + |a|
        return float(10 + np.abs(suite.a_bar).max())
    return hessian_row_norm(suite.hess(np.zeros((suite.n, suite.p))))


def window_laplacians(schedule: SwitchingSchedule, horizon: float) -> list[np.ndarray]:
    if schedule.mode == "periodic-regenerate":
        count = int(math.ceil(horizon / schedule.dwell))
        return [build_laplacian(graph_at(schedule, k * schedule.dwell)) for k in range(count)]
    return [build_laplacian(g) for _, g in schedule.sequence]


def admissible_eta(cfg: ExperimentConfig, suite, schedule, h: LinkNonlinearity) -> float:
    """``eta_bar`` using the exact sector slopes, the worst Hessian bound and the
    weakest algebraic connectivity among the topologies visited before the horizon."""
    kappa, K = sector_of(h, exact=True)
    lam = min(algebraic_connectivity(L) for L in window_laplacians(schedule, cfg.horizon))
    return eta_bar(kappa, K, hessian_bound(suite), suite.n, suite.p, lam)


def spectral_at_start(suite, schedule, h, eta) -> dict:
    """Spectral report of the initial topology, linearized at the consensus optimum.

    The local Hessians of a non-convex suite can be indefinite away from the
    optimum, so the equilibrium is the operating point whose spectrum governs
    the asymptotic rate.
    """
    L = build_laplacian(graph_at(schedule, 0.0))
    X = np.tile(suite.optimum.x, (suite.n, 1))
    kappa, K = sector_of(h, exact=True) if h.kind != "clip" or math.isfinite(h.z_max) else (1.0, 1.0)
    report = spectral_report(L, suite.hess(X), xi_ratio(h, X).reshape(-1), eta, kappa, K)
    return report.to_json()


def _run(cfg: ExperimentConfig, suite, schedule, h, label="main", events=()) -> tuple[RunSummary, Trajectory]:
    x0 = initial_x(cfg, suite)
    eta = admissible_eta(cfg, suite, schedule, h) if cfg.eta == "auto" else float(cfg.eta)
    traj = simulate(suite, schedule, h, cfg.integrator(eta), rng_seed=cfg.x0_seed, x0=x0)
    summary = RunSummary(
        final_gap=float(traj.gap[-1]),
        final_consensus_error=float(traj.consensus_err[-1]),
        fitted_rate=fit_rate(traj),
        spectral=spectral_at_start(suite, schedule, h, eta),
        events=list(events),
        label=label,
        extra={"eta": eta, "initial_gap": float(traj.gap[0]), "optimum": suite.optimum.x.tolist(),
               "max_abs_error": float(np.abs(traj.x[-1] - suite.optimum.x).max()),
               "max_tracking_error": float(traj.tracking_err.max())},
    )
    traj.meta.update({"label": label, "schedule": schedule.to_json() if schedule.mode != "static" else
                      {"mode": "static", "graph": schedule.sequence[0][1].to_json()}})
    return summary, traj


def _run_job(job):
    cfg, label, topology, link_prob, rho, removal = job
    suite, events = build_suite(cfg)
    schedule = build_schedule(cfg, topology, link_prob)
    if removal is not None:
        g, event = remove_links(schedule.sequence[0][1], removal, seed=cfg.graph_seed)
        schedule = SwitchingSchedule.static(g)
        events = events + [{"event": "link_failure", **event.to_json()}]
    return _run(cfg, suite, schedule, cfg.nonlinearity(rho), label, events)


def _run_all(cfg, jobs, workers):
    """Run independent jobs, serially or in a process pool; results keep job order."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(job) for job in jobs]
    summaries = {job[1]: s for job, (s, _) in zip(jobs, results)}
    trajectories = {job[1]: t for job, (_, t) in zip(jobs, results)}
    return ExperimentResult(cfg, summaries, trajectories)


def _require(cfg, name):
    if cfg.experiment != name:
        raise ConfigError(f"config is for {cfg.experiment!r}, expected {name!r}")


# -- experiments -------------------------------------------------------------

def run_regression_experiment(cfg: ExperimentConfig | None = None, workers: int = 1) -> ExperimentResult:
    """Distributed least squares on a static ER graph against the pooled solution."""
    cfg = cfg or default_config("regression")
    _require(cfg, "regression")
    return _run_all(cfg, [(cfg, "main", None, None, None, None)], workers)


def run_nonconvex_experiment(cfg: ExperimentConfig | None = None, workers: int = 1) -> ExperimentResult:
    """Zero-sum non-convex costs on switching ER graphs, one run per quantization level.

    Non-quantizing link maps ignore ``rhos`` and run once under the label ``main``.
    """
    cfg = cfg or default_config("nonconvex-switching")
    _require(cfg, "nonconvex-switching")
    if cfg.kind != "log_quantize":
        rhos = (None,)
        jobs = [(cfg, "main", None, None, None, None)]
    else:
        rhos = cfg.rhos or (cfg.rho,)
        jobs = [(cfg, f"rho={rho:.6g}", None, None, rho, None) for rho in rhos]
    result = _run_all(cfg, jobs, workers)
    result.table = [{"rho": rho, "final_gap": s.final_gap, "max_abs_x": s.extra["max_abs_error"],
                     "fitted_rate": s.fitted_rate}
                    for rho, s in zip(rhos, result.summaries.values())]
    return result


def run_exponential_vs_er(cfg: ExperimentConfig | None = None, workers: int = 1,
                          labels=("exponential", "er")) -> ExperimentResult:
    """Paired runs on a static exponential graph and on (switching) ER graphs."""
    cfg = cfg or default_config("exponential-vs-er")
    _require(cfg, "exponential-vs-er")
    jobs = [(cfg, label, label, cfg.er_link_prob, None, None) for label in labels]
    result = _run_all(cfg, jobs, workers)
    result.table = [{"topology": label, "final_gap": s.final_gap, "fitted_rate": s.fitted_rate,
                     "predicted_rate": s.spectral["predicted_rate"],
                     "algebraic_connectivity": s.spectral["algebraic_connectivity"]}
                    for label, s in result.summaries.items()]
    return result


def run_link_failure(cfg: ExperimentConfig | None = None, workers: int = 1) -> ExperimentResult:
    """Removal-rate sweep on one base ER graph.

    Every rate reuses the graph seed, so the removed link sets are nested.
    """
    cfg = cfg or default_config("link-failure")
    _require(cfg, "link-failure")
    if cfg.dwell is not None or cfg.topology != "er":
        raise ConfigError("link-failure runs on a static ER base graph")
    rates = cfg.removal_rates or (0.0,)
    jobs = [(cfg, f"p={p:g}", None, None, None, p) for p in rates]
    result = _run_all(cfg, jobs, workers)
    result.table = [{"removal_rate": p, "algebraic_connectivity": s.spectral["algebraic_connectivity"],
                     "fitted_rate": s.fitted_rate, "final_gap": s.final_gap,
                     "shortfall": s.events[-1]["shortfall"]}
                    for p, s in zip(rates, result.summaries.values())]
    conn = [row["algebraic_connectivity"] for row in result.table]
    speed = [abs(row["fitted_rate"]) if row["fitted_rate"] is not None else np.nan for row in result.table]
    if len(rates) > 2 and np.all(np.isfinite(speed)):
        rho_s = stats.spearmanr(conn, speed).statistic
        result.table.append({"spearman_connectivity_vs_rate": float(rho_s)})
    return result


def run_custom(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """One run of whatever the config describes."""
    return _run_all(cfg, [(cfg, "main", None, None, None, None)], workers)


RUNNERS = {
    "regression": run_regression_experiment,
    "nonconvex-switching": run_nonconvex_experiment,
    "exponential-vs-er": run_exponential_vs_er,
    "link-failure": run_link_failure,
    "custom": run_custom,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg, workers=workers)


def check_graphs(cfg: ExperimentConfig) -> list[str]:
    """Validation problems of the initial topology, empty when it is usable."""
    g = graph_at(build_schedule(cfg), 0.0)
    report = validate(g)
    return [name for name, ok in zip(("weight_balanced", "strongly_connected", "row_sums_below_one"),
                                     report.as_tuple()) if not ok]


# -- output ------------------------------------------------------------------

def _dump(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_outputs(result: ExperimentResult, out_dir) -> list[str]:
    """Write ``trace.csv`` (first run), ``summary.json`` and ``meta.json``.

    Sweeps also get one ``<label>/trace.csv`` per run.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    result.trajectory.write_csv(os.path.join(out_dir, "trace.csv"))
    written.append("trace.csv")
    if len(result.trajectories) > 1:
        for label, traj in result.trajectories.items():
            sub = os.path.join(out_dir, label)
            os.makedirs(sub, exist_ok=True)
            traj.write_csv(os.path.join(sub, "trace.csv"))
            written.append(os.path.join(label, "trace.csv"))
    _dump(os.path.join(out_dir, "summary.json"), result.to_json())
    meta = {"config": result.config.to_json(), "version": __version__, "numpy": np.__version__,
            "runs": {label: traj.meta for label, traj in result.trajectories.items()}}
    _dump(os.path.join(out_dir, "meta.json"), meta)
    written += ["summary.json", "meta.json"]
    return written
