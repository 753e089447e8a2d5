"""Experiment configs, run dispatch and aggregation into tidy CSV reports."""
from __future__ import annotations

import copy
import csv
import enum
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .baselines import PenaltyConfig, pbgd_run
from .diagnostics import SweepRow, SweepTable, gibbs_expectation_2d, power_lambda_rule, \
    surrogate_reference
from .errors import ConfigurationError, EstimatorError, SamplerDivergenceError
from .gibbs import LangevinConfig, sample_gibbs
from .problem import BilevelProblem, Sense
from .problems import HypercleanSpec, ToySpec, accuracy, cleaner_f1, fit_lower, \
    generate_hyperclean_data, make_gaussian, make_hyperclean, make_toy, write_hyperclean_files
from .pszo import OuterConfig, pszo_minsel
from .superquantile import SqConfig

log = logging.getLogger(__name__)

WORKERS_ENV = "SQBILEVEL_WORKERS"
EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
PSZO, V_PBGD, G_PBGD = "pszo_minsel", "v_pbgd", "g_pbgd"
SUMMARY_HEADER = ["setting", "method", "mean_err", "ci95", "n_seeds", "status"]


class Experiment(str, enum.Enum):
    TOY_OPTIMISTIC = "ToyOptimistic"
    TOY_PESSIMISTIC = "ToyPessimistic"
    DIM_SWEEP = "DimSweep"
    FIXED_K = "FixedK"
    APPROX_SWEEP = "ApproxSweep"
    SAMPLER_CHECK = "SamplerCheck"
    HYPERCLEAN = "Hyperclean"
    BASELINE_COMPARE = "BaselineCompare"


TOY_KINDS = {Experiment.TOY_OPTIMISTIC, Experiment.TOY_PESSIMISTIC, Experiment.DIM_SWEEP,
             Experiment.FIXED_K, Experiment.BASELINE_COMPARE}

_TOY_OUTER = {
    "n_outer": 500, "batch_directions": 8, "rho": 0.1, "eta": 0.05, "n_fresh": 64,
    "theta0": [1.0], "boundary_mode": "interiorize", "reuse_center_batch": False,
    "warm_start": True, "reeval_factor": 4,
    "langevin": {"lam": 0.01, "step_size": 0.02, "burn_in": 200, "steps_per_sample": 10,
                 "samples_per_chain": 1, "init": "gaussian", "init_scale": 1.0},
    "sq": {"delta": 0.1, "inner_iters": 64, "step_rule": "constant_averaged",
           "bound_safety": 2.0, "bound_floor": 1.0},
}
_PENALTY = {"gamma": 10.0, "joint_step": 0.01, "n_iters": 500,
            "lower_value_oracle": "closed_form", "inner_steps": 200, "inner_step_size": 0.01,
            "alternating": False}
_SWEEP = {"theta": 0.0, "deltas": [0.2, 0.1, 0.05, 0.025], "lambda_c": 1.0,
          "n_samples": 20000, "step_size": 0.02, "burn_in": 1000}
_SAMPLER = {"lam": 0.01, "step_size": 0.01, "burn_in": 1000, "n_samples": 100000,
            "gaussian_dim": 3, "toy_samples": 10000, "quadrature_grid": 2001,
            "mean_tol": 0.01, "cov_rtol": 0.05, "norm_rtol": 0.02}
_HYPERCLEAN = {"n_train": 100, "n_val": 50, "n_test": 1000, "pollute_rate": 0.4,
               "feature_dim": 10, "ridge": 0.01, "weight_bound": 10.0, "data_seed": 0,
               "separation": 1.5}
_HYPERCLEAN_OUTER = dict(copy.deepcopy(_TOY_OUTER), n_outer=100, theta0=None, rho=0.5,
                         eta=1.0, batch_directions=4, n_fresh=32, reeval_factor=2)
_HYPERCLEAN_OUTER["langevin"] = dict(_TOY_OUTER["langevin"], lam=1e-4, step_size=0.5,
                                     burn_in=100, init="zero")
_HYPERCLEAN_OUTER["sq"] = dict(_TOY_OUTER["sq"], inner_iters=32)

_SETTINGS = {
    Experiment.TOY_OPTIMISTIC: dict(dims=[2], k=None, sense="optimistic", methods=[PSZO]),
    Experiment.TOY_PESSIMISTIC: dict(dims=[5, 10], k=None, sense="pessimistic", methods=[PSZO]),
    Experiment.DIM_SWEEP: dict(dims=[2, 5, 10, 20], k=None, sense="optimistic", methods=[PSZO]),
    Experiment.FIXED_K: dict(dims=[5, 10, 20, 30], k=1, sense="optimistic", methods=[PSZO]),
    Experiment.BASELINE_COMPARE: dict(dims=[2], k=None, sense="optimistic",
                                      methods=[PSZO, V_PBGD, G_PBGD]),
    Experiment.APPROX_SWEEP: dict(dims=[2], k=1, sense="pessimistic", methods=["sqg_reference"]),
    Experiment.SAMPLER_CHECK: dict(dims=[], k=None, sense="pessimistic", methods=["lmc"]),
    Experiment.HYPERCLEAN: dict(dims=[], k=None, sense="optimistic",
                                methods=[PSZO, "uniform_weights"]),
}
_SEEDS = {Experiment.APPROX_SWEEP: list(range(5)), Experiment.SAMPLER_CHECK: [42],
          Experiment.HYPERCLEAN: [0]}


def default_config(experiment) -> dict:
    """Complete JSON-ready config with every default spelled out."""
    exp = Experiment(experiment)
    cfg = {"experiment": exp.value, "seeds": _SEEDS.get(exp, list(range(10))),
           "out_dir": f"results/{exp.value}", "figures": True, "timings": True}
    cfg.update(copy.deepcopy(_SETTINGS[exp]))
    if exp in TOY_KINDS:
        cfg["outer"] = copy.deepcopy(_TOY_OUTER)
    if exp is Experiment.BASELINE_COMPARE:
        cfg["penalty"] = dict(_PENALTY)
    if exp is Experiment.APPROX_SWEEP:
        cfg["sweep"] = dict(_SWEEP)
    if exp is Experiment.SAMPLER_CHECK:
        cfg["sampler"] = dict(_SAMPLER)
    if exp is Experiment.HYPERCLEAN:
        cfg["outer"] = copy.deepcopy(_HYPERCLEAN_OUTER)
        cfg["hyperclean"] = dict(_HYPERCLEAN)
    return cfg


_SECTIONS = ("outer", "penalty", "sweep", "sampler", "hyperclean")
_TOP_KEYS = {"experiment", "seeds", "out_dir", "figures", "timings", "dims", "k", "sense",
             "methods"} | set(_SECTIONS)


def _merge(base: dict, override: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if key not in base:
            raise ConfigurationError(f"unknown key {where}.{key}")
        if isinstance(base[key], dict) and isinstance(val, dict):
            out[key] = _merge(base[key], val, f"{where}.{key}")
        else:
            out[key] = val
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment
    seeds: Tuple[int, ...]
    out_dir: str
    dims: Tuple[int, ...] = ()
    k: Optional[int] = None
    sense: Sense = Sense.OPTIMISTIC
    methods: Tuple[str, ...] = (PSZO,)
    figures: bool = True
    timings: bool = True
    sections: Dict[str, dict] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict) or "experiment" not in raw:
            raise ConfigurationError("config must be a JSON object with an 'experiment' key")
        try:
            exp = Experiment(raw["experiment"])
        except ValueError:
            names = ", ".join(e.value for e in Experiment)
            raise ConfigurationError(f"unknown experiment {raw['experiment']!r}; "
                                     f"expected one of {names}") from None
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        base = default_config(exp)
        if exp in TOY_KINDS:
            base.setdefault("penalty", dict(_PENALTY))
        extra = {s: {} for s in _SECTIONS if s in raw and s not in base}
        if extra:
            raise ConfigurationError(f"sections {sorted(extra)} do not apply to {exp.value}")
        full = _merge(base, raw, "config")
        seeds = full["seeds"]
        if not isinstance(seeds, list) or not seeds or \
                not all(isinstance(s, int) and s >= 0 for s in seeds):
            raise ConfigurationError("seeds must be a nonempty list of nonnegative integers")
        if len(set(seeds)) != len(seeds):
            raise ConfigurationError("seeds must be distinct")
        dims = full["dims"]
        if exp in TOY_KINDS or exp is Experiment.APPROX_SWEEP:
            if not dims or not all(isinstance(d, int) and d >= 2 for d in dims):
                raise ConfigurationError("dims must be a nonempty list of integers >= 2")
        unknown_methods = set(full["methods"]) - set(_SETTINGS[exp]["methods"]) - \
            ({V_PBGD, G_PBGD} if exp in TOY_KINDS else set())
        if unknown_methods or not full["methods"]:
            raise ConfigurationError(f"methods {sorted(unknown_methods)} not available for "
                                     f"{exp.value}")
        try:
            sense = Sense(full["sense"])
        except ValueError:
            raise ConfigurationError(f"unknown sense {full['sense']!r}") from None
        cfg = cls(experiment=exp, seeds=tuple(seeds), out_dir=str(full["out_dir"]),
                  dims=tuple(dims), k=full["k"], sense=sense, methods=tuple(full["methods"]),
                  figures=bool(full["figures"]), timings=bool(full["timings"]),
                  sections={s: full[s] for s in _SECTIONS if s in full})
        for key in cfg.settings():
            cfg.build_problem(key)
        for key in cfg.settings():
            for method in cfg.methods:
                cfg.build_method(key, method, seeds[0])
        return cfg

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = {"experiment": self.experiment.value, "seeds": list(self.seeds),
               "out_dir": self.out_dir, "figures": self.figures, "timings": self.timings,
               "dims": list(self.dims), "k": self.k, "sense": self.sense.value,
               "methods": list(self.methods)}
        out.update(copy.deepcopy(self.sections))
        return out

    # -- settings ----------------------------------------------------------

    def settings(self) -> List[str]:
        exp = self.experiment
        if exp in TOY_KINDS:
            return [f"d={d} k={self._k(d)}" for d in self.dims]
        if exp is Experiment.APPROX_SWEEP:
            return [f"delta={float(dl)!r}" for dl in self.sections["sweep"]["deltas"]]
        if exp is Experiment.SAMPLER_CHECK:
            return ["gaussian_mean", "gaussian_cov", "toy_norm"]
        return [f"p={float(self.sections['hyperclean']['pollute_rate'])!r}"]

    def _k(self, d: int) -> int:
        return d - 1 if self.k is None else int(self.k)

    def build_problem(self, setting: str) -> BilevelProblem:
        try:
            exp = self.experiment
            if exp in TOY_KINDS:
                d = int(setting.split()[0].split("=")[1])
                return make_toy(ToySpec(d, self._k(d), self.sense))
            if exp is Experiment.APPROX_SWEEP:
                d = self.dims[0]
                return make_toy(ToySpec(d, self._k(d), self.sense))
            if exp is Experiment.SAMPLER_CHECK:
                if setting.startswith("gaussian"):
                    return make_gaussian(int(self.sections["sampler"]["gaussian_dim"]))
                return make_toy(ToySpec(2, 1, Sense.PESSIMISTIC))
            return make_hyperclean(HypercleanSpec(**self.sections["hyperclean"]))[0]
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def build_method(self, setting: str, method: str, seed: int):
        """Solver config object for one run (validated eagerly)."""
        try:
            if method == PSZO:
                return outer_config(self.sections["outer"], self.build_problem(setting), seed)
            if method in (V_PBGD, G_PBGD):
                variant = "value_penalty" if method == V_PBGD else "grad_norm_penalty"
                return PenaltyConfig(variant=variant, **self.sections["penalty"])
            return None
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None


def outer_config(section: dict, problem: BilevelProblem, seed: int) -> OuterConfig:
    sec = copy.deepcopy(section)
    lang = sec.pop("langevin")
    lang.setdefault("smoothness", problem.lower_smoothness)
    sq = SqConfig(**sec.pop("sq"))
    theta0 = sec.pop("theta0", None)
    return OuterConfig(langevin=LangevinConfig(**lang), sq=sq, seed=seed,
                       theta0=None if theta0 is None else tuple(theta0), **sec)


# -- run units ---------------------------------------------------------------


def _slug(text: str) -> str:
    return "".join(c if c.isalnum() or c in "._-" else "_" for c in text)


def _run_file(cfg: ExperimentConfig, setting: str, method: str, seed: int) -> str:
    return os.path.join(cfg.out_dir, "runs", f"{_slug(setting)}__{method}__seed{seed}.csv")


def _run_toy(cfg, setting, method, seed):
    problem = cfg.build_problem(setting)
    solver = cfg.build_method(setting, method, seed)
    if method == PSZO:
        traj = pszo_minsel(problem, solver)
    else:
        theta0 = cfg.sections["outer"]["theta0"] if "outer" in cfg.sections else None
        traj = pbgd_run(problem, solver, theta0=theta0, seed=seed)
    path = _run_file(cfg, setting, method, seed)
    traj.to_csv(path, timings=cfg.timings, method_column=True)
    return {"value": traj.best_error, "best_iter": traj.best_index, "file": path}


def _run_sweep(cfg, setting, method, seed):
    sw = cfg.sections["sweep"]
    problem = cfg.build_problem(setting)
    deltas = [float(x) for x in sw["deltas"]]
    i = cfg.settings().index(setting)
    delta = deltas[i]
    lam = power_lambda_rule(cfg._k(cfg.dims[0]), sw["lambda_c"])(delta)
    lang = LangevinConfig(lam=lam, step_size=sw["step_size"], burn_in=sw["burn_in"],
                          smoothness=problem.lower_smoothness)
    val = surrogate_reference(problem, [sw["theta"]], delta, lang, int(sw["n_samples"]),
                              (seed, 4, i))
    return {"value": abs(val - float(problem.closed_form_hyper([sw["theta"]]))), "lambda": lam}


def _run_sampler(cfg, setting, method, seed):
    sp = cfg.sections["sampler"]
    problem = cfg.build_problem(setting)
    lam, h = sp["lam"], sp["step_size"]
    if setting.startswith("gaussian"):
        lang = LangevinConfig(lam=lam, step_size=h, burn_in=sp["burn_in"],
                              n_chains=int(sp["n_samples"]), smoothness=problem.lower_smoothness)
        X = sample_gibbs(problem, [0.0], lang, seed).samples
        if setting == "gaussian_mean":
            value, target = float(np.abs(X.mean(axis=0)).max()), 0.0
            return {"value": value, "target": target, "passed": value <= sp["mean_tol"]}
        target_cov = lam / (1.0 - h / 2.0) * np.eye(X.shape[1])
        rel = float(np.linalg.norm(np.cov(X.T) - target_cov) / np.linalg.norm(target_cov))
        return {"value": rel, "target": 0.0, "passed": rel <= sp["cov_rtol"]}
    lang = LangevinConfig(lam=lam, step_size=h, burn_in=sp["burn_in"],
                          n_chains=int(sp["toy_samples"]), smoothness=problem.lower_smoothness)
    X = sample_gibbs(problem, [0.0], lang, seed).samples
    norm = lambda Z: np.linalg.norm(Z, axis=-1)  # noqa: E731
    oracle = gibbs_expectation_2d(problem, [0.0], lam, norm, n_grid=int(sp["quadrature_grid"]))
    rel = abs(float(norm(X).mean()) - oracle) / oracle
    return {"value": rel, "target": oracle, "passed": rel <= sp["norm_rtol"]}


def _run_hyperclean(cfg, setting, method, seed):
    spec = HypercleanSpec(**cfg.sections["hyperclean"])
    problem, data, _ = make_hyperclean(spec)
    if method == PSZO:
        traj = pszo_minsel(problem, cfg.build_method(setting, method, seed))
        traj.to_csv(_run_file(cfg, setting, method, seed), timings=cfg.timings,
                    method_column=True)
        theta = traj.best_theta
    else:
        theta = np.zeros(problem.upper_dim)
    x = fit_lower(problem, theta)
    return {"value": 1.0 - accuracy(x, data.X_test, data.y_test),
            "cleaner_f1": cleaner_f1(theta, data)}


_RUNNERS = {"toy": _run_toy, "sweep": _run_sweep, "sampler": _run_sampler,
            "hyperclean": _run_hyperclean}


def _runner_kind(exp: Experiment) -> str:
    if exp in TOY_KINDS:
        return "toy"
    return {Experiment.APPROX_SWEEP: "sweep", Experiment.SAMPLER_CHECK: "sampler",
            Experiment.HYPERCLEAN: "hyperclean"}[exp]


def _execute(raw: dict, setting: str, method: str, seed: int) -> dict:
    cfg = ExperimentConfig.from_dict(raw)
    row = {"setting": setting, "method": method, "seed": seed}
    try:
        row.update(_RUNNERS[_runner_kind(cfg.experiment)](cfg, setting, method, seed))
        row["status"] = "ok"
    except (SamplerDivergenceError, EstimatorError, ArithmeticError) as exc:
        log.warning("run %s / %s / seed %d failed: %s", setting, method, seed, exc)
        row.update(status="failed", message=str(exc))
    return row


# -- aggregation -------------------------------------------------------------


@dataclass
class Report:
    config: ExperimentConfig
    runs: List[dict]
    summary: List[dict]
    files: Dict[str, str]
    exit_code: int
    slope: Optional[float] = None


def ci95(values) -> float:
    """``1.96 * std / sqrt(n)`` with the sample (n-1) standard deviation."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(1.96 * np.std(v, ddof=1) / math.sqrt(v.size))


def aggregate(runs: List[dict], settings: List[str], methods: List[str],
              checks: bool = False) -> List[dict]:
    """One row per (setting, method) in config order; failed seeds are excluded."""
    rows = []
    for setting in settings:
        for method in methods:
            group = sorted((r for r in runs if r["setting"] == setting and r["method"] == method),
                           key=lambda r: r["seed"])
            ok = [r for r in group if r["status"] == "ok"]
            vals = [r["value"] for r in ok]
            if not ok:
                status = "failed"
            elif checks:
                status = "pass" if len(ok) == len(group) and all(r["passed"] for r in ok) \
                    else "fail"
            else:
                status = "ok" if len(ok) == len(group) else f"partial({len(group) - len(ok)})"
            rows.append({"setting": setting, "method": method,
                         "mean_err": float(np.mean(vals)) if vals else float("nan"),
                         "ci95": ci95(vals), "n_seeds": len(ok), "status": status})
    return rows


def write_summary(rows: List[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([r["setting"], r["method"], repr(r["mean_err"]), repr(r["ci95"]),
                        r["n_seeds"], r["status"]])


def write_runs(runs: List[dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["setting", "method", "seed", "value", "status", "message"])
        for r in runs:
            value = repr(float(r["value"])) if "value" in r else ""
            w.writerow([r["setting"], r["method"], r["seed"], value, r["status"],
                        r.get("message", "")])


def format_table(cfg: ExperimentConfig, rows: List[dict], slope: Optional[float] = None) -> str:
    """Fixed-width table with settings as rows and methods as columns."""
    titles = {
        Experiment.APPROX_SWEEP: "|F_sqg(theta) - F_closed(theta)| (mean +/- 95% CI)",
        Experiment.SAMPLER_CHECK: "moment checks (deviation, status)",
        Experiment.HYPERCLEAN: "test error rate (mean +/- 95% CI)",
    }
    title = titles.get(cfg.experiment, "best-so-far |theta_hat - theta*| (mean +/- 95% CI)")
    methods = list(cfg.methods)
    cells = {}
    for r in rows:
        text = "n/a" if r["n_seeds"] == 0 else f"{r['mean_err']:.3f} +/- {r['ci95']:.3f}"
        if cfg.experiment is Experiment.SAMPLER_CHECK:
            text = f"{r['mean_err']:.4g} {r['status']}"
        elif r["status"] != "ok":
            text += f" [{r['status']}]"
        cells[(r["setting"], r["method"])] = text
    settings = cfg.settings()
    w0 = max(len("setting"), *(len(s) for s in settings))
    widths = [max(len(m), *(len(cells[(s, m)]) for s in settings)) for m in methods]
    lines = [f"{cfg.experiment.value}: {title}",
             "  ".join(["setting".ljust(w0)] + [m.ljust(w) for m, w in zip(methods, widths)])]
    lines.append("-" * len(lines[-1]))
    for s in settings:
        lines.append("  ".join([s.ljust(w0)] +
                               [cells[(s, m)].ljust(w) for m, w in zip(methods, widths)]))
    if slope is not None:
        lines.append(f"log-log slope of error vs delta: {slope:.3f}")
    return "\n".join(line.rstrip() for line in lines) + "\n"


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be >= 1")
    return n


def _check_writable(out_dir: str) -> None:
    try:
        os.makedirs(os.path.join(out_dir, "runs"), exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out_dir):
            pass
    except OSError as exc:
        raise ConfigurationError(f"out_dir {out_dir!r} is not writable: {exc}") from None


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None,
                   figures: Optional[bool] = None) -> Report:
    """Run every (setting, method, seed), then write the summary, table and figures."""
    _check_writable(cfg.out_dir)
    workers = worker_count() if workers is None else workers
    raw = cfg.to_dict()
    if cfg.experiment is Experiment.HYPERCLEAN:
        spec = HypercleanSpec(**cfg.sections["hyperclean"])
        write_hyperclean_files(generate_hyperclean_data(spec), os.path.join(cfg.out_dir, "data"))
    tasks = [(s, m, seed) for s in cfg.settings() for m in cfg.methods for seed in cfg.seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_execute, raw, *t) for t in tasks]
            results = [f.result() for f in futures]
    else:
        results = []
        for t in tasks:
            results.append(_execute(raw, *t))
            log.info("finished %s / %s / seed %d: %s", *t, results[-1]["status"])
    runs = sorted(results, key=lambda r: (cfg.settings().index(r["setting"]),
                                          cfg.methods.index(r["method"]), r["seed"]))
    checks = cfg.experiment is Experiment.SAMPLER_CHECK
    summary = aggregate(runs, cfg.settings(), list(cfg.methods), checks=checks)

    files = {"summary": os.path.join(cfg.out_dir, "summary.csv"),
             "runs": os.path.join(cfg.out_dir, "runs.csv"),
             "table": os.path.join(cfg.out_dir, "table.txt"),
             "config": os.path.join(cfg.out_dir, "config.json")}
    slope = None
    if cfg.experiment is Experiment.APPROX_SWEEP:
        table = _sweep_table(cfg, runs)
        files["sweep"] = os.path.join(cfg.out_dir, "sweep.csv")
        table.to_csv(files["sweep"])
        if all(r.errors.size for r in table.rows):
            slope = table.slope
    write_summary(summary, files["summary"])
    write_runs(runs, files["runs"])
    with open(files["table"], "w") as fh:
        fh.write(format_table(cfg, summary, slope))
    with open(files["config"], "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    n_bad = sum(r["status"] != "ok" for r in runs)
    failed_checks = checks and any(r["status"] != "pass" for r in summary)
    code = EXIT_PARTIAL if (n_bad or failed_checks) else EXIT_OK
    report = Report(cfg, runs, summary, files, code, slope)
    if cfg.figures if figures is None else figures:
        from .plotting import render_report
        files.update(render_report(report))
    return report


def _sweep_table(cfg: ExperimentConfig, runs: List[dict]) -> SweepTable:
    rows = []
    for setting, delta in zip(cfg.settings(), cfg.sections["sweep"]["deltas"]):
        ok = [r for r in runs if r["setting"] == setting and r["status"] == "ok"]
        lam = ok[0]["lambda"] if ok else float("nan")
        rows.append(SweepRow(float(delta), lam, np.array([r["value"] for r in ok])))
    return SweepTable(rows)
