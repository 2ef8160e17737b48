"""
Consensus least-squares + l1 experiment over an Erdos-Renyi network.

Each agent holds ``f_i(x) = 1/2 ||Psi_i x - b_i||^2`` with
``Psi_i = I + 0.1 Omega_i`` and ``h_i(x) = lam ||x||_1``; entries of
``Omega_i`` and ``b_i`` are standard normal. The methods compared are the
clique-based ADMM and FLiP-ADMM on maximal cliques and on edges, PG-EXTRA,
and the two solvers with globally uniform parameters.

Randomness comes from a PCG64 generator seeded through
``numpy.random.SeedSequence(seed)``, spawned into two independent streams:
stream 0 draws the graph and data, stream 1 draws random initial points.
"""

import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .functions import L1Norm, Quadratic, SplitSum, Zero, lambda_max, soft_threshold
from .graph import edge_cliques, enumerate_maximal_cliques, erdos_renyi, read_graph
from .problem import aggregate, build_consensus_problem, consensus_objective, residual
from .solvers import (ADMM, FLIP, Divergence, ExtraState, LyapunovMonitor, SolverParams,
                      SolverState, build_mixing_matrix, cl_admm_step, cl_flip_admm_step,
                      lyapunov_value, pg_extra_step, run, suggest_params,
                      uniform_baseline_params, validate_theorem1)

log = logging.getLogger(__name__)

CSV_COLUMNS = ("k", "objective", "residual", "rel_obj_residual")

DEFAULT_METHODS = (
    {"name": "cl_admm_max", "algorithm": "admm", "cliques": "maximal", "params": "local"},
    {"name": "cl_admm_edges", "algorithm": "admm", "cliques": "edges", "params": "local"},
    {"name": "cl_flip_max", "algorithm": "flip", "cliques": "maximal", "params": "local"},
    {"name": "cl_flip_edges", "algorithm": "flip", "cliques": "edges", "params": "local"},
    {"name": "pg_extra", "algorithm": "pg_extra"},
    {"name": "admm_uniform", "algorithm": "admm", "cliques": "maximal", "params": "uniform"},
    {"name": "flip_uniform", "algorithm": "flip", "cliques": "maximal", "params": "uniform"},
)

PAPER_SCALE = {"n": 50, "p": 0.1}

# relative objective residual levels reported in the summary
REPORT_LEVELS = (1e-3, 1e-4, 1e-5)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    seed: int = 0
    n: int = 20
    p: float = 0.25
    d: int = 10
    lam: float = 0.001
    horizon: int = 5000
    methods: list = field(default_factory=lambda: [dict(m) for m in DEFAULT_METHODS])
    output_dir: str = "results"
    graph_file: str = None
    init: str = "zero"
    # stop a method once both its relative objective residual and its
    # constraint residual fall below this
    stop_at: float = None
    reference_tol: float = 1e-12
    reference_max_iter: int = 100_000
    cross_check: bool = False
    lyapunov: bool = False

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def paper_scale(self):
        out = ExperimentConfig(**{**asdict(self), **PAPER_SCALE})
        out.check()
        return out

    def check(self):
        if not 0 < self.p <= 1:
            raise ConfigError(f"edge probability must lie in (0, 1], got {self.p}")
        if self.n < 2 or self.d < 1 or self.horizon < 0:
            raise ConfigError("need n >= 2, d >= 1 and a nonnegative horizon")
        if self.init not in ("zero", "random"):
            raise ConfigError(f"init must be 'zero' or 'random', got {self.init!r}")
        names = [m.get("name") for m in self.methods]
        if None in names or len(set(names)) != len(names):
            raise ConfigError("every method needs a unique name")
        for m in self.methods:
            if m.get("algorithm") not in ("admm", "flip", "pg_extra"):
                raise ConfigError(f"{m['name']}: unknown algorithm {m.get('algorithm')!r}")
            if m["algorithm"] != "pg_extra":
                if m.get("cliques", "maximal") not in ("maximal", "edges"):
                    raise ConfigError(f"{m['name']}: cliques must be 'maximal' or 'edges'")
                if m.get("params", "local") not in ("local", "uniform"):
                    raise ConfigError(f"{m['name']}: params must be 'local' or 'uniform'")
                scale = m.get("alpha_scale", 1.0)
                if not (isinstance(scale, (int, float)) and scale > 0):
                    raise ConfigError(f"{m['name']}: alpha_scale must be a positive number")


@dataclass
class Instance:
    graph: object
    Psi: list
    b: list
    lam: float
    d: int

    def agent_functions(self):
        f = [SplitSum(Zero(self.d), Quadratic(P, b)) for P, b in zip(self.Psi, self.b)]
        h = [L1Norm(self.d, self.lam) if self.lam > 0 else Zero(self.d) for _ in self.Psi]
        return f, h

    def problem(self, cliques="maximal"):
        fam = enumerate_maximal_cliques(self.graph) if cliques == "maximal" else edge_cliques(self.graph)
        f, h = self.agent_functions()
        return build_consensus_problem(fam, self.d, f, h)


def streams(seed):
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(2)]


def generate_instance(cfg):
    """Connected random graph plus agent data, fully determined by ``cfg.seed``."""
    rng = streams(cfg.seed)[0]
    if cfg.graph_file:
        graph = read_graph(cfg.graph_file)
        if not graph.is_connected():
            raise ConfigError(f"{cfg.graph_file}: graph is not connected")
    else:
        graph = erdos_renyi(cfg.n, cfg.p, rng)
    d = cfg.d
    Psi, b = [], []
    for _ in graph.nodes:
        Psi.append(np.eye(d) + 0.1 * rng.standard_normal((d, d)))
        b.append(rng.standard_normal(d))
    return Instance(graph, Psi, b, cfg.lam, d)


def compute_reference_optimum(inst, tol=1e-12, max_iter=100_000):
    """
    Minimize ``sum_i f_i(xi) + h_i(xi)`` over a common ``xi`` by proximal
    gradient, stopping when the gradient-mapping norm drops below ``tol``.

    Returns ``(xi, obj)``.
    """
    H = sum(P.T @ P for P in inst.Psi)
    q = sum(P.T @ b for P, b in zip(inst.Psi, inst.b))
    const = 0.5 * sum(float(b @ b) for b in inst.b)
    coef = inst.lam * len(inst.Psi)
    t = 1.0 / lambda_max(H)
    xi = np.zeros(inst.d)
    for _ in range(max_iter):
        nxt = soft_threshold(xi - t * (H @ xi - q), t * coef)
        gap = np.linalg.norm(nxt - xi) / t
        xi = nxt
        if gap <= tol:
            break
    else:
        raise RuntimeError(f"reference solve did not reach {tol} in {max_iter} iterations")
    obj = 0.5 * float(xi @ H @ xi) - float(q @ xi) + const + coef * float(np.sum(np.abs(xi)))
    return xi, obj


def reference_point(p, params, method=ADMM, state=None, tol=1e-12, max_iter=100_000):
    """
    Saddle point estimate: run the clique solver until both the constraint
    residual and the iterate change fall below ``tol``.
    """
    step = cl_admm_step if method == ADMM else cl_flip_admm_step
    st = SolverState.initial(p) if state is None else state
    for _ in range(max_iter):
        nxt = step(p, params, st)
        move = np.linalg.norm(nxt.flat() - st.flat())
        st = nxt
        if move <= tol * max(1.0, np.linalg.norm(st.flat())) and residual(p, st.x, st.y)[1] <= tol:
            return st
    raise RuntimeError(f"reference run did not settle within {max_iter} iterations")


@dataclass
class RunRecord:
    method: str
    rows: list
    wall_time: float
    validation: dict = None
    status: str = "ok"
    extra: dict = field(default_factory=dict)

    def iterations_to(self, level):
        """
        First iteration from which the relative objective residual stays at
        or below ``level`` for the rest of the run; ``None`` if it never
        settles. A first-crossing count would be misleading because the
        objective at non-consensual iterates can dip below the optimum.
        """
        settled = None
        for row in self.rows:
            if row["rel_obj_residual"] <= level:
                if settled is None:
                    settled = row["k"]
            else:
                settled = None
        return settled


def method_params(p, spec):
    """Parameters for a method spec; ``alpha_scale`` multiplies every ``alpha_i``."""
    style = FLIP if spec["algorithm"] == "flip" else ADMM
    if spec.get("params", "local") == "uniform":
        params = uniform_baseline_params(p, style)
    else:
        params = suggest_params(p, style)
    scale = spec.get("alpha_scale", 1.0)
    if scale != 1.0:
        params = SolverParams(params.alpha * scale, params.beta, params.gamma, params.phi,
                              params.mode, params.epsilon)
    return params


def _init_state(cfg, p):
    if cfg.init == "random":
        return SolverState.initial(p, streams(cfg.seed)[1])
    return SolverState.initial(p)


def validate_methods(cfg, inst):
    """
    Parameter reports for every configured method, computed before any run.

    Clique methods are checked against the clique-wise step-size conditions;
    PG-EXTRA needs ``lambda_min(W_m) > -1`` for a positive step.
    """
    out = {}
    for spec in cfg.methods:
        if spec["algorithm"] == "pg_extra":
            lam_min = float(np.linalg.eigvalsh(build_mixing_matrix(inst.graph))[0])
            out[spec["name"]] = {"ok": lam_min > -1.0, "lambda_min_mixing": lam_min}
            continue
        p = inst.problem(spec.get("cliques", "maximal"))
        style = FLIP if spec["algorithm"] == "flip" else ADMM
        out[spec["name"]] = validate_theorem1(p, method_params(p, spec), style).summary()
    return out


def run_clique_method(cfg, inst, spec, obj_star, force=False, stepper=None):
    p = inst.problem(spec.get("cliques", "maximal"))
    style = FLIP if spec["algorithm"] == "flip" else ADMM
    params = method_params(p, spec)
    report = validate_theorem1(p, params, style)
    if not report.ok and not force:
        return RunRecord(spec["name"], [], 0.0, report.summary(), status="invalid")
    rows = []

    class Stop(Exception):
        pass

    def collect(state, rec):
        rows.append({"k": rec["k"], "objective": rec["consensus_objective"],
                     "residual": rec["residual"], "rel_obj_residual": rec["rel_obj_residual"],
                     "constrained_objective": rec["objective"]})
        if cfg.stop_at is not None and max(rec["rel_obj_residual"], rec["residual"]) <= cfg.stop_at:
            raise Stop

    start = time.perf_counter()
    status = "ok"
    try:
        run(p, style, params, cfg.horizon, state=_init_state(cfg, p), obj_star=obj_star,
            callbacks=[collect], stepper=stepper)
    except Stop:
        pass
    except Divergence as exc:
        log.error("%s diverged: %s", spec["name"], exc)
        status = "diverged"
    return RunRecord(spec["name"], rows, time.perf_counter() - start, report.summary(), status)


def run_pg_extra(cfg, inst, spec, obj_star):
    g = inst.graph
    mix = build_mixing_matrix(g)
    lam_min = float(np.linalg.eigvalsh(mix)[0])
    L = max(lambda_max(P.T @ P) for P in inst.Psi)
    eta = 0.9 * (1.0 + lam_min) / L
    gram = np.stack([P.T @ P for P in inst.Psi])
    Ptb = np.stack([P.T @ b for P, b in zip(inst.Psi, inst.b)])
    f, h = inst.agent_functions()

    def grad_F(x):
        return np.einsum("ijk,ik->ij", gram, x) - Ptb

    def prox_h(v, step):
        return soft_threshold(v, step * inst.lam) if inst.lam > 0 else v

    x0 = np.zeros((g.n, inst.d))
    if cfg.init == "random":
        x0 = streams(cfg.seed)[1].standard_normal(x0.shape)
    state = ExtraState(0, x0, np.zeros_like(x0))
    rows = []

    def record(st):
        obj = float(sum(f[i].value(st.x[i]) + h[i].value(st.x[i]) for i in range(g.n)))
        rows.append({"k": st.k, "objective": obj,
                     "residual": float(np.linalg.norm(st.x - st.x.mean(axis=0))),
                     "rel_obj_residual": abs(obj - obj_star) / abs(obj_star)})
        return max(rows[-1]["rel_obj_residual"], rows[-1]["residual"])

    start = time.perf_counter()
    status = "ok"
    done = record(state)
    for _ in range(cfg.horizon):
        if cfg.stop_at is not None and done <= cfg.stop_at:
            break
        state = pg_extra_step(mix, eta, grad_F, prox_h, state)
        if not np.all(np.isfinite(state.x)):
            status = "diverged"
            break
        done = record(state)
    return RunRecord(spec["name"], rows, time.perf_counter() - start,
                     {"eta": eta, "lambda_min_mixing": lam_min}, status)


def write_csv(path, rows):
    """
    One line per produced iterate ``k >= 1`` (the initial point is kept in
    memory only, so a zero horizon gives a header-only file). Floats use
    ``repr`` so reruns are byte-identical.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            if row["k"] == 0:
                continue
            w.writerow([row["k"]] + [repr(float(row[c])) for c in CSV_COLUMNS[1:]])


def lyapunov_check(inst, spec, cfg, steps):
    """Largest one-step increase of the Lyapunov function along a validated run."""
    p = inst.problem(spec.get("cliques", "maximal"))
    style = FLIP if spec["algorithm"] == "flip" else ADMM
    params = method_params(p, spec)
    start = _init_state(cfg, p)
    ref = reference_point(p, params, style, start, cfg.reference_tol, cfg.reference_max_iter)
    mon = LyapunovMonitor(aggregate(p), params, (ref.x, ref.y, ref.u), style)
    step = cl_admm_step if style == ADMM else cl_flip_admm_step
    st = start
    prev_V = None
    worst = -math.inf
    for _ in range(steps):
        st = step(p, params, st)
        V, _ = lyapunov_value(mon, st)
        if prev_V is not None:
            worst = max(worst, V - prev_V)
        prev_V = V
    return worst


def run_experiment(cfg, force=False, write=True):
    """
    Generate the instance, run every configured method, and (optionally)
    write one CSV per method plus ``summary.json`` into ``cfg.output_dir``.
    """
    inst = generate_instance(cfg)
    xi, obj_star = compute_reference_optimum(inst, cfg.reference_tol, cfg.reference_max_iter)
    summary = {"config": asdict(cfg), "edges": len(inst.graph.edges), "obj_star": obj_star}
    if cfg.cross_check:
        p = inst.problem("maximal")
        st = reference_point(p, suggest_params(p), ADMM, None, cfg.reference_tol, cfg.reference_max_iter)
        summary["cross_check_rel_gap"] = abs(consensus_objective(p, st.x) - obj_star) / abs(obj_star)

    records = []
    for spec in cfg.methods:
        if spec["algorithm"] == "pg_extra":
            rec = run_pg_extra(cfg, inst, spec, obj_star)
        else:
            rec = run_clique_method(cfg, inst, spec, obj_star, force)
        records.append(rec)
        if write:
            os.makedirs(cfg.output_dir, exist_ok=True)
            write_csv(os.path.join(cfg.output_dir, f"{spec['name']}.csv"), rec.rows)
    summary["methods"] = {
        r.method: {"status": r.status, "iterations": r.rows[-1]["k"] if r.rows else None,
                   "final_rel_obj_residual": r.rows[-1]["rel_obj_residual"] if r.rows else None,
                   "final_residual": r.rows[-1]["residual"] if r.rows else None,
                   "final_constrained_objective": r.rows[-1].get("constrained_objective") if r.rows else None,
                   "iterations_to": {f"{lev:g}": r.iterations_to(lev) for lev in REPORT_LEVELS},
                   "validation": r.validation, "wall_time": r.wall_time}
        for r in records
    }
    if cfg.lyapunov:
        spec = next(m for m in cfg.methods if m["algorithm"] == "admm")
        worst = lyapunov_check(inst, spec, cfg, min(cfg.horizon, 2000))
        summary["lyapunov"] = {"method": spec["name"], "max_increase": worst,
                               "nonincreasing": worst <= 1e-9}
    if write:
        with open(os.path.join(cfg.output_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, default=float)
    return records, summary
