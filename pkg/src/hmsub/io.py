"""CSV ingestion with dataset presets, TOML experiment configs, and report / plot-data files."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from hmsub.data import Dataset, validate_dataset
from hmsub.evaluation import BenchmarkReport, ExperimentConfig, PhaseCurve, TauPolicy
from hmsub.samplers import SamplerSpec
from hmsub.synthetic import LogNormal, SimulationModel, StudentT, ZeroNoise

PLOT_COLUMNS = ("method", "sr_or_delta", "repetition", "metric")
FLAT_COLUMNS = ("method", "sr", "mean", "std", "K_effective")


@dataclass(frozen=True)
class CsvSchema:
    """Column rules for one CSV file. Columns are names, or 0-based positions."""

    target_column: str | int
    drop_columns: tuple = ()
    has_header: bool = True
    delimiter: str = ","

    def __post_init__(self):
        object.__setattr__(self, "drop_columns", tuple(self.drop_columns))
        if self.target_column in self.drop_columns:
            raise ValueError(f"target {self.target_column!r} is also listed for dropping")
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be a single character")


# UCI files as distributed; the user fetches them.
PRESETS = {
    # energydata_complete.csv: date + 28 numeric columns (Appliances is the target)
    "appliances": CsvSchema("Appliances", ("date",)),
    # poker-hand-training-true.data: 10 card attributes + hand class, no header
    "poker": CsvSchema(10, (), has_header=False),
    # gt_2011.csv ... gt_2015.csv concatenated: 9 ambient/process features + CO, NOX
    "gas_turbine": CsvSchema("NOX", ("CO",)),
    # WECs: 16 x-coords, 16 y-coords, 16 per-buoy powers, total power; no header.
    # The per-buoy powers sum to the target and are dropped as collinear.
    "wave_energy": CsvSchema(48, tuple(range(32, 48)), has_header=False),
    # CASP.csv: RMSD target + F1..F9
    "pppts": CsvSchema("RMSD", ()),
    # PRSA_Data_*.csv: drop the row id, two text columns and the station name
    "air_quality": CsvSchema("PM2.5", ("No", "wd", "station", "year")),
}


@dataclass
class LoadedCsv:
    data: Dataset
    dropped_rows: int
    feature_names: list[str]
    sha256: str
    standardized: bool = False
    scaling: dict = field(default_factory=dict)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve(col, columns):
    if isinstance(col, int) or (isinstance(col, str) and col not in columns and col.isdigit()):
        i = int(col)
        if not 0 <= i < len(columns):
            raise KeyError(f"column index {i} out of range ({len(columns)} columns)")
        return columns[i]
    if col not in columns:
        raise KeyError(f"column {col!r} not found; available: {list(columns)}")
    return col


def standardize_features(data: Dataset):
    """Center and scale every non-constant, non-intercept column by its full-data mean and std."""
    X = np.array(data.X, dtype=float)
    start = 1 if data.intercept_included else 0
    cols = X[:, start:]
    mu, sd = cols.mean(axis=0), cols.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    X[:, start:] = (cols - mu) / sd
    return Dataset(X, data.y, data.intercept_included)


def _to_float(text):
    try:
        return float(text)
    except ValueError:
        return math.nan


def _parse_column(col) -> np.ndarray:
    # numpy's str->float cast is correctly rounded, unlike pandas' default parser
    raw = col.to_numpy(dtype=str)
    try:
        return np.char.strip(raw).astype(float)
    except ValueError:
        return np.array([_to_float(v) for v in raw])


def load_csv(path, schema: CsvSchema | str, intercept: bool = True, standardize: bool = False) -> LoadedCsv:
    """Read a numeric regression table.

    Rows with a missing or non-numeric value in any kept column are dropped
    and counted. Features are optionally standardized, then an intercept
    column is optionally prepended.
    """
    if isinstance(schema, str):
        schema = PRESETS[schema]
    digest = file_digest(path)
    try:
        frame = pd.read_csv(
            path,
            sep=schema.delimiter,
            header=0 if schema.has_header else None,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
        )
    except Exception as exc:
        raise ValueError(f"cannot parse {path}: {exc}") from exc
    columns = list(frame.columns)
    target = _resolve(schema.target_column, columns)
    drops = {_resolve(c, columns) for c in schema.drop_columns}
    kept = [c for c in columns if c not in drops and c != target]
    values = np.column_stack([_parse_column(frame[c]) for c in kept + [target]])
    good = np.isfinite(values).all(axis=1)
    values = values[good]
    if len(values) == 0:
        raise ValueError(f"{path}: no usable rows after dropping missing / non-numeric values")
    data = Dataset(values[:, :-1], values[:, -1])
    if standardize:
        data = standardize_features(data)
    if intercept:
        data = data.with_intercept()
    validate_dataset(data)
    return LoadedCsv(data, int((~good).sum()), [str(c) for c in kept], digest, standardize)


def write_dataset_csv(data: Dataset, path, names=None) -> None:
    """Write X columns then y with a header; floats in shortest round-trip form."""
    start = 1 if data.intercept_included else 0
    X = data.X[:, start:]
    names = list(names) if names else [f"x{j}" for j in range(X.shape[1])]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([*names, "y"])
        for row, yi in zip(X.tolist(), data.y.tolist()):
            w.writerow([repr(v) for v in row] + [repr(yi)])


def _flat_path(path: Path) -> Path:
    return path.with_suffix(".csv") if path.suffix != ".csv" else path.with_name(path.stem + ".flat.csv")


def save_report(report: BenchmarkReport | PhaseCurve, path) -> Path:
    """JSON with full metadata plus a sibling flat CSV (method, sr, mean, std, K_effective)."""
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, allow_nan=False))
    flat = _flat_path(path)
    with open(flat, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(FLAT_COLUMNS)
        for c in _cells(report):
            w.writerow([c.method, repr(c.sr), _fmt(c.mean), _fmt(c.std), c.k_effective])
    return flat


def load_report(path) -> BenchmarkReport | PhaseCurve:
    d = json.loads(Path(path).read_text())
    if "df" in d:
        return PhaseCurve.from_dict(d)
    return BenchmarkReport.from_dict(d)


def _fmt(v):
    return "" if v is None else repr(float(v))


def _cells(report):
    if isinstance(report, PhaseCurve):
        return [c for cs in report.cells.values() for c in cs]
    return report.cells


def emit_plot_data(report: BenchmarkReport | PhaseCurve, path) -> None:
    """Long-format TSV, one row per (method, sr or delta, repetition).

    Columns: method, sr_or_delta, repetition, metric. Failed repetitions
    carry ``NA`` in the metric column.
    """
    with open(path, "w", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for c in _cells(report):
            for k, v in enumerate(c.values):
                w.writerow([c.method, repr(c.sr), k, "NA" if v is None else repr(v)])


def read_plot_data(path) -> list[tuple[str, float, int, float | None]]:
    rows = []
    with open(path, newline="") as f:
        r = csv.reader(f, delimiter="\t")
        header = next(r)
        if tuple(header) != PLOT_COLUMNS:
            raise ValueError(f"unexpected plot-data header {header}")
        for m, x, k, v in r:
            rows.append((m, float(x), int(k), None if v == "NA" else float(v)))
    return rows


def _noise_from(d: dict):
    kind = str(d.get("noise", "lognormal")).lower()
    if kind in ("lognormal", "ln"):
        return LogNormal(float(d.get("mu", 0.0)), float(d.get("sigma", 1.0)))
    if kind in ("t", "student", "studentt"):
        return StudentT(float(d.get("df", 2.0)))
    if kind in ("none", "zero"):
        return ZeroNoise()
    raise ValueError(f"unknown noise {kind!r}")


def config_from_dict(d: dict, base_dir=None) -> ExperimentConfig:
    """Build an ExperimentConfig from the parsed TOML layout documented in the README."""
    methods = []
    for m in d.get("methods", []):
        m = dict(m)
        kind = m.pop("kind")
        methods.append(SamplerSpec(kind, 1, alpha=m.get("alpha"), burn_in=m.get("burn_in")))
    t = dict(d.get("tau", {}))
    policy = t.pop("policy", "grid")
    kw = {}
    if "value" in t:
        kw["value"] = float(t["value"])
    if "t" in t:
        kw["t"] = float(t["t"])
    if "grid" in t:
        kw["grid"] = tuple(float(x) for x in t["grid"])
    if "factors" in t:
        kw["factors"] = tuple(float(x) for x in t["factors"])
    model = data_path = schema = None
    if "model" in d:
        md = d["model"]
        model = SimulationModel(md.get("design", "M1"), _noise_from(md), int(md["n"]), int(md["d"]))
    if "data" in d:
        dd = d["data"]
        data_path = Path(dd["path"])
        if base_dir is not None and not data_path.is_absolute():
            data_path = Path(base_dir) / data_path
        if "preset" in dd:
            schema = PRESETS[dd["preset"]]
        else:
            schema = CsvSchema(dd["target"], tuple(dd.get("drop", ())), dd.get("header", True),
                               dd.get("delimiter", ","))
    return ExperimentConfig(
        methods=methods,
        sampling_ratios=[float(x) for x in d.get("sampling_ratios", [0.002, 0.004, 0.006, 0.008, 0.01])],
        repetitions=int(d.get("repetitions", 100)),
        base_seed=int(d.get("base_seed", 0)),
        tau_policy=TauPolicy(policy, **kw),
        model=model,
        data_path=str(data_path) if data_path is not None else None,
        schema=schema,
        intercept=bool(d.get("intercept", True)),
        standardize=d.get("standardize"),
        huber_tol=float(d.get("huber_tol", 1e-8)),
        huber_max_iter=int(d.get("huber_max_iter", 5000)),
    )


def load_config(path) -> tuple[ExperimentConfig, dict]:
    """Parse a TOML config; returns the config and the raw mapping (for e.g. the [phase] table)."""
    path = Path(path)
    raw = tomllib.loads(path.read_text())
    return config_from_dict(raw, base_dir=path.parent), raw


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    version: str
    input_digest: str | None
    started: str
    finished: str | None = None
    command: list[str] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.__dict__, indent=2, default=str))

