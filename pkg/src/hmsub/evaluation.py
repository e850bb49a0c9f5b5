"""AME / APE metrics, the paired K-repetition benchmark runner and the phase-transition driver."""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from hmsub.data import Dataset, RngSeed, select_rows
from hmsub.huber import HuberConfig, fit_huber_irls, fit_ols, select_tau_grid, tau_rule_sigma
from hmsub.samplers import SamplerSpec, pilot_estimate, run_sampler, sample_uniform
from hmsub.synthetic import SimulationModel, StudentT, gen_dataset

# sub-stream keys below RngSeed(base_seed, k); data generation uses keys 0-2
_PILOT, _METHOD, _PHASE_UNIF = 3, 4, 5

MAX_FAIL_FRACTION = 0.1
DEFAULT_GRID_FACTORS = tuple(np.geomspace(1e-5, 1e2, 20).tolist())


def ame(betas: Sequence, beta_star) -> float:
    """Mean Euclidean norm of the coefficient errors over the K runs."""
    if len(betas) == 0:
        raise ValueError("need at least one coefficient vector")
    beta_star = np.asarray(beta_star, dtype=float)
    errs = []
    for b in betas:
        b = np.asarray(b, dtype=float)
        if b.shape != beta_star.shape:
            raise ValueError(f"coefficient shape {b.shape} does not match {beta_star.shape}")
        errs.append(np.linalg.norm(b - beta_star))
    return float(np.mean(errs))


def ape(y_hat, y) -> float:
    """Euclidean norm of one run's prediction error; averaging over runs is left to the caller."""
    y_hat, y = np.asarray(y_hat, dtype=float), np.asarray(y, dtype=float)
    if y_hat.shape != y.shape:
        raise ValueError(f"prediction length {y_hat.shape} does not match response {y.shape}")
    return float(np.linalg.norm(y_hat - y))


def slope_estimate(curve) -> float:
    """OLS slope of log(AME) on log(n_sub)."""
    pts = np.asarray(curve, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (n_sub, AME) points")
    if np.any(pts <= 0):
        raise ValueError("n_sub and AME must be positive")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    lx = lx - lx.mean()
    return float(lx @ (ly - ly.mean()) / (lx @ lx))


@dataclass(frozen=True)
class TauPolicy:
    """How HMS (and Huber baselines) get their tau.

    ``fixed`` uses ``value``; ``sigma`` uses sigma_y * sqrt(n_sub / t);
    ``grid`` searches ``grid`` (absolute taus) or, when that is unset,
    ``factors`` times sigma_y of each repetition's data, and keeps the
    candidate with the lowest mean metric over all repetitions.
    """

    kind: str = "grid"
    value: float | None = None
    t: float | None = None
    grid: tuple[float, ...] | None = None
    factors: tuple[float, ...] = DEFAULT_GRID_FACTORS

    def __post_init__(self):
        if self.kind not in ("fixed", "grid", "sigma"):
            raise ValueError(f"unknown tau policy {self.kind!r}")
        if self.kind == "fixed" and not (self.value is not None and self.value > 0):
            raise ValueError("fixed tau policy needs a positive value")
        if self.kind == "sigma" and not (self.t is not None and self.t > 0):
            raise ValueError("sigma tau policy needs t > 0")
        if self.kind == "grid" and not (self.grid or self.factors):
            raise ValueError("grid tau policy needs a non-empty grid")

    def candidates(self, data: Dataset, n_sub: int) -> list[float]:
        if self.kind == "fixed":
            return [float(self.value)]
        if self.kind == "sigma":
            return [tau_rule_sigma(data, n_sub, self.t)]
        if self.grid:
            return [float(g) for g in self.grid]
        sigma = tau_rule_sigma(data, 1, 1.0)
        return [f * sigma for f in self.factors]


@dataclass
class ExperimentConfig:
    """One benchmark grid: methods x sampling ratios x K paired repetitions.

    Exactly one of ``model`` (simulation, metric AME), ``data`` (in-memory
    real data, metric APE) or ``data_path`` + ``schema`` (CSV, metric APE)
    should be given. ``SamplerSpec.n_sub`` in ``methods`` is ignored and
    replaced by ``round(sr * n)`` for every ratio.
    """

    methods: list[SamplerSpec]
    sampling_ratios: list[float]
    repetitions: int = 100
    base_seed: int = 0
    tau_policy: TauPolicy = field(default_factory=TauPolicy)
    model: SimulationModel | None = None
    data: Dataset | None = None
    data_path: str | None = None
    schema: object | None = None
    intercept: bool = True
    standardize: bool | None = None
    huber_tol: float = 1e-8
    huber_max_iter: int = 5000

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.methods:
            raise ValueError("no methods configured")
        for sr in self.sampling_ratios:
            if not 0 < sr <= 1:
                raise ValueError(f"sampling ratio {sr} outside (0, 1]")
        if sum(x is not None for x in (self.model, self.data, self.data_path)) != 1:
            raise ValueError("give exactly one of model, data or data_path")

    @property
    def simulated(self) -> bool:
        return self.model is not None

    @property
    def metric(self) -> str:
        return "ame" if self.simulated else "ape"

    def to_dict(self) -> dict:
        out = {
            "methods": [_spec_dict(m) for m in self.methods],
            "sampling_ratios": list(self.sampling_ratios),
            "repetitions": self.repetitions,
            "base_seed": self.base_seed,
            "tau_policy": _tau_dict(self.tau_policy),
            "intercept": self.intercept,
            "standardize": self.standardize,
            "huber_tol": self.huber_tol,
            "huber_max_iter": self.huber_max_iter,
        }
        if self.model is not None:
            out["model"] = _model_dict(self.model)
        if self.data_path is not None:
            out["data_path"] = str(self.data_path)
            out["schema"] = asdict(self.schema) if self.schema is not None else None
        if self.data is not None:
            h = hashlib.sha256(self.data.X.tobytes() + self.data.y.tobytes()).hexdigest()
            out["data_sha256"] = h
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _spec_dict(s: SamplerSpec) -> dict:
    return {k: v for k, v in asdict(s).items() if v is not None and k != "n_sub"}


def _tau_dict(p: TauPolicy) -> dict:
    d = asdict(p)
    if p.kind != "grid":
        d.pop("factors")
        d.pop("grid")
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v is not None}


def _model_dict(m: SimulationModel) -> dict:
    noise = {"kind": type(m.noise).__name__, **asdict(m.noise)}
    return {"design": m.design, "noise": noise, "n": m.n, "d": m.d}


@dataclass
class Cell:
    """Per-(method, ratio) results; ``values[k]`` is None when repetition k failed."""

    method: str
    sr: float
    n_sub: int
    values: list[float | None]
    errors: list[str | None]
    tau: float | None = None
    wall_times: list[float] = field(default_factory=list)

    @property
    def ok_values(self) -> list[float]:
        return [v for v in self.values if v is not None]

    @property
    def k_effective(self) -> int:
        return len(self.ok_values)

    @property
    def mean(self) -> float | None:
        v = self.ok_values
        return float(np.mean(v)) if v else None

    @property
    def std(self) -> float | None:
        v = self.ok_values
        if not v:
            return None
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    @property
    def error(self) -> str | None:
        if self.k_effective:
            return None
        return next((e for e in self.errors if e), "no successful repetitions")

    def to_dict(self) -> dict:
        wt = self.wall_times
        return {
            "method": self.method,
            "sr": self.sr,
            "n_sub": self.n_sub,
            "mean": self.mean,
            "std": self.std,
            "k_effective": self.k_effective,
            "tau": self.tau,
            "error": self.error,
            "values": self.values,
            "errors": self.errors,
            "wall_times": wt,
            "wall_time_mean": float(np.mean(wt)) if wt else None,
            "wall_time_std": float(np.std(wt)) if wt else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Cell:
        return cls(d["method"], d["sr"], d["n_sub"], list(d["values"]), list(d["errors"]),
                   d.get("tau"), list(d.get("wall_times", [])))

    def result_key(self):
        """Everything except timings, for reproducibility checks."""
        return (self.method, self.sr, self.n_sub, tuple(self.values), tuple(self.errors), self.tau)


@dataclass
class BenchmarkReport:
    metric: str
    cells: list[Cell]
    metadata: dict = field(default_factory=dict)

    def cell(self, method: str, sr: float) -> Cell:
        for c in self.cells:
            if c.method == method and c.sr == sr:
                return c
        raise KeyError((method, sr))

    def same_results(self, other: BenchmarkReport) -> bool:
        return self.metric == other.metric and [c.result_key() for c in self.cells] == [
            c.result_key() for c in other.cells
        ]

    def to_dict(self) -> dict:
        return {"metric": self.metric, "cells": [c.to_dict() for c in self.cells], "metadata": self.metadata}

    @classmethod
    def from_dict(cls, d: dict) -> BenchmarkReport:
        return cls(d["metric"], [Cell.from_dict(c) for c in d["cells"]], dict(d.get("metadata", {})))

    def __eq__(self, other):
        if not isinstance(other, BenchmarkReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _prepare_real_data(cfg: ExperimentConfig) -> Dataset:
    if cfg.data is not None:
        data = cfg.data
        standardize = bool(cfg.standardize) if cfg.standardize is not None else False
        if standardize:
            from hmsub.io import standardize_features

            data = standardize_features(data)
        if cfg.intercept and not data.intercept_included:
            data = data.with_intercept()
        return data
    from hmsub.io import load_csv

    standardize = True if cfg.standardize is None else cfg.standardize
    return load_csv(cfg.data_path, cfg.schema, intercept=cfg.intercept, standardize=standardize).data


_REAL_DATA_CACHE: dict[str, Dataset] = {}


def _real_data(cfg: ExperimentConfig) -> Dataset:
    key = cfg.config_hash()
    if key not in _REAL_DATA_CACHE:
        _REAL_DATA_CACHE.clear()
        _REAL_DATA_CACHE[key] = _prepare_real_data(cfg)
    return _REAL_DATA_CACHE[key]


def _repetition_data(cfg: ExperimentConfig, k: int):
    """Dataset and scoring function for repetition k."""
    if cfg.simulated:
        data, truth, _ = gen_dataset(cfg.model, RngSeed(cfg.base_seed, k), intercept=cfg.intercept)
        start = 1 if cfg.intercept else 0
        beta_star = truth.beta_star

        def score(beta):
            return float(np.linalg.norm(beta[start:] - beta_star))

        return data, score
    data = _real_data(cfg)

    def score(beta):
        return ape(data.X @ beta, data.y)

    return data, score


def _n_sub(sr: float, n: int) -> int:
    return max(1, min(n, int(round(sr * n))))


def _run_repetition(cfg: ExperimentConfig, k: int) -> dict:
    """All (method, ratio) outcomes for one repetition; keyed by (mi, si)."""
    seed = RngSeed(cfg.base_seed, k)
    data, score = _repetition_data(cfg, k)
    out = {}
    for si, sr in enumerate(cfg.sampling_ratios):
        n_sub = _n_sub(sr, data.n)
        pilot = None
        pilot_err = None
        if any(m.needs_pilot for m in cfg.methods):
            try:
                pilot = pilot_estimate(data, n_sub, seed.generator(_PILOT, si)).beta
            except Exception as exc:  # recorded per cell
                pilot_err = f"pilot: {type(exc).__name__}: {exc}"
        for mi, method in enumerate(cfg.methods):
            spec = replace(method, n_sub=n_sub)
            taus = cfg.tau_policy.candidates(data, n_sub) if spec.kind == "hms" else [None]
            results = []
            for tau in taus:
                t0 = time.perf_counter()
                if spec.needs_pilot and pilot is None:
                    results.append((None, pilot_err, tau, 0.0))
                    continue
                try:
                    s = replace(spec, tau=tau) if tau is not None else spec
                    cfg_h = HuberConfig(tau, cfg.huber_tol, cfg.huber_max_iter) if tau else None
                    _, fit = run_sampler(s, data, pilot, seed.generator(_METHOD, si, mi), cfg_h)
                    if spec.kind == "hms" and not fit.converged:
                        raise RuntimeError(f"IRLS did not converge in {fit.iterations} iterations")
                    val, err = score(fit.beta), None
                    if not math.isfinite(val):
                        val, err = None, "non-finite metric"
                except Exception as exc:
                    val, err = None, f"{type(exc).__name__}: {exc}"
                results.append((val, err, tau, time.perf_counter() - t0))
            out[(mi, si)] = results
    return out


def _collect(cfg: ExperimentConfig, jobs: int) -> list[dict]:
    ks = range(cfg.repetitions)
    if jobs > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_repetition, [cfg] * cfg.repetitions, ks))
    return [_run_repetition(cfg, k) for k in ks]


def _pick_candidate(per_rep: list[list[tuple]]) -> int:
    """Index of the tau candidate with the lowest mean metric over its successful repetitions.

    Candidates failing in more than ``MAX_FAIL_FRACTION`` of the repetitions
    are disqualified; ties go to the smaller tau.
    """
    n_cand = len(per_rep[0])

    def mean_metric(j):
        ok = [rep[j][0] for rep in per_rep if rep[j][0] is not None]
        if not ok or len(per_rep) - len(ok) > MAX_FAIL_FRACTION * len(per_rep):
            return math.inf
        return float(np.mean(ok))

    return int(select_tau_grid(None, None, list(range(1, n_cand + 1)), lambda j: mean_metric(int(j) - 1))) - 1


def run_benchmark(cfg: ExperimentConfig, jobs: int = 1) -> BenchmarkReport:
    """Run every (method, ratio) cell over K paired repetitions.

    Repetition k draws its data (simulation) from stream k and shares one
    pilot per ratio among pilot-based methods. Failures are recorded per
    repetition and never abort the grid.
    """
    started = datetime.now(timezone.utc).isoformat()
    reps = _collect(cfg, jobs)
    n_rows = cfg.model.n if cfg.simulated else _real_data(cfg).n
    cells = []
    for si, sr in enumerate(cfg.sampling_ratios):
        for mi, method in enumerate(cfg.methods):
            per_rep = [rep[(mi, si)] for rep in reps]
            j = _pick_candidate(per_rep) if len(per_rep[0]) > 1 else 0
            chosen = [rep[j] for rep in per_rep]
            taus = [c[2] for c in chosen if c[2] is not None]
            cells.append(
                Cell(
                    method=replace(method, n_sub=1).tag,
                    sr=sr,
                    n_sub=_n_sub(sr, n_rows),
                    values=[c[0] for c in chosen],
                    errors=[c[1] for c in chosen],
                    tau=float(np.mean(taus)) if taus else None,
                    wall_times=[c[3] for c in chosen],
                )
            )
    from hmsub import __version__

    meta = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "base_seed": cfg.base_seed,
        "seeds": {"scheme": "SeedSequence(base_seed, spawn_key=(k, purpose, ...))", "streams": cfg.repetitions},
        "metric": cfg.metric,
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    return BenchmarkReport(cfg.metric, cells, meta)


PHASE_METHODS = ("HMS", "Huber-UNIF", "LS-UNIF")


@dataclass
class PhaseCurve:
    """AME per method against delta = df - 1 - 0.05, one row per df."""

    df: list[float]
    cells: dict[str, list[Cell]]
    metadata: dict = field(default_factory=dict)

    @property
    def delta(self) -> list[float]:
        return [df - 1 - 0.05 for df in self.df]

    def rows(self) -> list[dict]:
        out = []
        for i, df in enumerate(self.df):
            row = {"df": df, "delta": self.delta[i]}
            for m in PHASE_METHODS:
                c = self.cells[m][i]
                row[m] = c.mean
                row[f"{m}_std"] = c.std
                row[f"{m}_k"] = c.k_effective
                row[f"{m}_tau"] = c.tau
            out.append(row)
        return out

    def win_rate(self, i: int, a: str = "HMS", b: str = "Huber-UNIF") -> float:
        pairs = [(x, y) for x, y in zip(self.cells[a][i].values, self.cells[b][i].values)
                 if x is not None and y is not None]
        return float(np.mean([x <= y for x, y in pairs])) if pairs else float("nan")

    def same_results(self, other: PhaseCurve) -> bool:
        return self.df == other.df and all(
            [c.result_key() for c in self.cells[m]] == [c.result_key() for c in other.cells[m]]
            for m in PHASE_METHODS
        )

    def to_dict(self) -> dict:
        return {
            "df": self.df,
            "rows": self.rows(),
            "cells": {m: [c.to_dict() for c in cs] for m, cs in self.cells.items()},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> PhaseCurve:
        cells = {m: [Cell.from_dict(c) for c in cs] for m, cs in d["cells"].items()}
        return cls(list(d["df"]), cells, dict(d.get("metadata", {})))


def _phase_repetition(cfg: ExperimentConfig, df_grid: Sequence[float], k: int) -> dict:
    out = {}
    n_sub_sr = cfg.sampling_ratios[0]
    hms_spec = next((m for m in cfg.methods if m.kind == "hms"), SamplerSpec("hms", 1))
    for di, df in enumerate(df_grid):
        model = replace(cfg.model, noise=StudentT(df))
        seed = RngSeed(cfg.base_seed, k)
        data, truth, _ = gen_dataset(model, seed, intercept=cfg.intercept)
        start = 1 if cfg.intercept else 0

        def score(beta):
            return float(np.linalg.norm(beta[start:] - truth.beta_star))

        n_sub = _n_sub(n_sub_sr, data.n)
        taus = cfg.tau_policy.candidates(data, n_sub)
        pilot = pilot_estimate(data, n_sub, seed.generator(_PILOT, di)).beta
        sub = select_rows(data, sample_uniform(data.n, n_sub, seed.generator(_PHASE_UNIF, di)))

        def attempt(fn, tau):
            t0 = time.perf_counter()
            try:
                fit = fn(tau)
                if not fit.converged:
                    raise RuntimeError(f"IRLS did not converge in {fit.iterations} iterations")
                return (score(fit.beta), None, tau, time.perf_counter() - t0)
            except Exception as exc:
                return (None, f"{type(exc).__name__}: {exc}", tau, time.perf_counter() - t0)

        def hms(tau):
            spec = replace(hms_spec, n_sub=n_sub, tau=tau)
            h = HuberConfig(tau, cfg.huber_tol, cfg.huber_max_iter)
            return run_sampler(spec, data, pilot, seed.generator(_METHOD, di), h)[1]

        def huber(tau):
            return fit_huber_irls(sub, HuberConfig(tau, cfg.huber_tol, cfg.huber_max_iter))

        out[("HMS", di)] = [attempt(hms, t) for t in taus]
        out[("Huber-UNIF", di)] = [attempt(huber, t) for t in taus]
        out[("LS-UNIF", di)] = [attempt(lambda _t: fit_ols(sub), None)]
    return out


def phase_transition(cfg: ExperimentConfig, df_grid: Sequence[float], jobs: int = 1) -> PhaseCurve:
    """AME of HMS, Huber on a uniform subsample and LS on the same subsample, per Student-t df.

    ``cfg.model`` supplies design, n and d (its noise is replaced by t(df));
    ``cfg.sampling_ratios[0] * n`` is the subsample size and ``cfg.tau_policy``
    sets tau for both Huber-based methods.
    """
    if not cfg.simulated:
        raise ValueError("phase transition needs a simulation model")
    df_grid = [float(x) for x in df_grid]
    if any(not df > 1 for df in df_grid):
        raise ValueError("df values must exceed 1")
    started = datetime.now(timezone.utc).isoformat()
    ks = range(cfg.repetitions)
    if jobs > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reps = list(pool.map(_phase_repetition, [cfg] * cfg.repetitions, [df_grid] * cfg.repetitions, ks))
    else:
        reps = [_phase_repetition(cfg, df_grid, k) for k in ks]
    n_sub = _n_sub(cfg.sampling_ratios[0], cfg.model.n)
    cells = {}
    for m in PHASE_METHODS:
        cells[m] = []
        for di, df in enumerate(df_grid):
            per_rep = [rep[(m, di)] for rep in reps]
            j = _pick_candidate(per_rep) if len(per_rep[0]) > 1 else 0
            chosen = [rep[j] for rep in per_rep]
            taus = [c[2] for c in chosen if c[2] is not None]
            cells[m].append(Cell(m, df - 1 - 0.05, n_sub, [c[0] for c in chosen], [c[1] for c in chosen],
                                 float(np.mean(taus)) if taus else None, [c[3] for c in chosen]))
    from hmsub import __version__

    meta = {
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "df_grid": df_grid,
        "version": __version__,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    return PhaseCurve(df_grid, cells, meta)
