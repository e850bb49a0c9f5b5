import json

import numpy as np
import pytest

from hmsub.data import Dataset, RngSeed
from hmsub.evaluation import ExperimentConfig, TauPolicy, phase_transition, run_benchmark
from hmsub.io import (
    FLAT_COLUMNS,
    PLOT_COLUMNS,
    PRESETS,
    CsvSchema,
    emit_plot_data,
    load_config,
    load_csv,
    load_report,
    read_plot_data,
    save_report,
    standardize_features,
    write_dataset_csv,
)
from hmsub.samplers import SamplerSpec
from hmsub.synthetic import LogNormal, SimulationModel, StudentT, gen_dataset


def write(path, text):
    path.write_text(text)
    return path


def test_load_basic(tmp_path):
    p = write(tmp_path / "a.csv", "x1,x2,y\n1,2,3\n4,5,6\n7,8,9\n")
    out = load_csv(p, CsvSchema("y"), intercept=False)
    assert out.data.n == 3 and out.data.d == 2 and out.dropped_rows == 0
    assert np.array_equal(out.data.y, [3, 6, 9]) and out.feature_names == ["x1", "x2"]
    assert len(out.sha256) == 64
    with_int = load_csv(p, CsvSchema("y"))
    assert with_int.data.intercept_included and with_int.data.d == 3


def test_load_drops_bad_rows(tmp_path):
    p = write(tmp_path / "a.csv", "x1,x2,y\n1,,3\n4,5,6\n7,abc,9\n1,2,inf\n")
    out = load_csv(p, CsvSchema("y"), intercept=False)
    assert out.data.n == 1 and out.dropped_rows == 3


def test_load_positional_and_drop(tmp_path):
    p = write(tmp_path / "a.data", "1;9;2;10\n3;9;4;20\n")
    out = load_csv(p, CsvSchema(3, (1,), has_header=False, delimiter=";"), intercept=False)
    assert np.array_equal(out.data.X, [[1, 2], [3, 4]]) and np.array_equal(out.data.y, [10, 20])


def test_load_errors(tmp_path):
    p = write(tmp_path / "a.csv", "x,y\n1,a\n")
    with pytest.raises(KeyError):
        load_csv(p, CsvSchema("target"))
    with pytest.raises(ValueError):
        load_csv(p, CsvSchema("y"))
    with pytest.raises(KeyError):
        load_csv(p, CsvSchema(7, has_header=False))
    with pytest.raises(ValueError):
        CsvSchema("y", ("y",))
    with pytest.raises(ValueError):
        CsvSchema("y", delimiter=";;")


def test_load_deterministic_and_standardize(tmp_path):
    rng = np.random.default_rng(0)
    data = Dataset(rng.normal(5, 3, size=(40, 3)), rng.normal(size=40))
    p = tmp_path / "d.csv"
    write_dataset_csv(data, p)
    a = load_csv(p, CsvSchema("y"), intercept=False)
    b = load_csv(p, CsvSchema("y"), intercept=False)
    assert a.data == b.data == data  # repr round-trip is exact
    s = load_csv(p, CsvSchema("y"), standardize=True)
    assert s.standardized and np.allclose(s.data.X[:, 1:].mean(0), 0) and np.allclose(s.data.X[:, 1:].std(0), 1)
    assert np.all(s.data.X[:, 0] == 1)


def test_standardize_keeps_constant_columns():
    d = standardize_features(Dataset(np.column_stack([np.ones(4), [1.0, 2, 3, 4]]), np.zeros(4)))
    assert np.all(d.X[:, 0] == 0) and abs(d.X[:, 1].mean()) < 1e-15


def test_presets():
    assert set(PRESETS) == {"appliances", "poker", "gas_turbine", "wave_energy", "pppts", "air_quality"}
    assert len(PRESETS["wave_energy"].drop_columns) == 16
    assert PRESETS["air_quality"].target_column == "PM2.5" and len(PRESETS["air_quality"].drop_columns) == 4
    assert PRESETS["appliances"].target_column == "Appliances"


def test_air_quality_preset(tmp_path):
    header = "No,year,month,day,hour,PM2.5,PM10,SO2,NO2,CO,O3,TEMP,PRES,DEWP,RAIN,wd,WSPM,station"
    rows = ["1,2013,3,1,0,4,4,4,7,300,77,-0.7,1023,-18.8,0,NNW,4.4,Aotizhongxin",
            "2,2013,3,1,1,8,8,4,7,300,77,-1.1,1023.2,-18.2,0,N,4.7,Aotizhongxin",
            "3,2013,3,1,2,NA,7,5,10,300,73,-1.1,1023.5,-18.2,0,NNW,5.6,Aotizhongxin"]
    p = write(tmp_path / "prsa.csv", "\n".join([header, *rows]) + "\n")
    out = load_csv(p, "air_quality", intercept=False)
    assert out.data.n == 2 and out.dropped_rows == 1 and out.data.d == 13
    assert "PM2.5" not in out.feature_names and "wd" not in out.feature_names


def _report(tmp_path, fail=False):
    cfg = ExperimentConfig(
        [SamplerSpec("uniform", 1), SamplerSpec("hms", 1)], [0.05, 0.1], repetitions=2, base_seed=1,
        tau_policy=TauPolicy("fixed", value=1e-3), model=SimulationModel("M1", LogNormal(), 300, 3),
        huber_max_iter=1 if fail else 5000)
    return run_benchmark(cfg)


def test_report_roundtrip(tmp_path):
    rep = _report(tmp_path)
    flat = save_report(rep, tmp_path / "r.json")
    assert load_report(tmp_path / "r.json") == rep
    lines = flat.read_text().strip().splitlines()
    assert lines[0] == ",".join(FLAT_COLUMNS) and len(lines) == 1 + 2 * 2


def test_failed_cell_serialized(tmp_path):
    rep = _report(tmp_path, fail=True)
    save_report(rep, tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    hms = [c for c in d["cells"] if c["method"] == "HMS"]
    assert all(c["error"] and c["mean"] is None for c in hms)
    assert load_report(tmp_path / "r.json") == rep


def test_plot_data(tmp_path):
    rep = _report(tmp_path)
    emit_plot_data(rep, tmp_path / "p.tsv")
    text = (tmp_path / "p.tsv").read_text().splitlines()
    assert text[0] == "\t".join(PLOT_COLUMNS) and len(text) == 1 + 2 * 2 * 2
    rows = read_plot_data(tmp_path / "p.tsv")
    # per-repetition values survive bit-exactly and re-aggregate to the report
    for c in rep.cells:
        vals = [v for m, x, _, v in rows if m == c.method and x == c.sr]
        assert vals == c.values
        assert abs(np.mean([v for v in vals if v is not None]) - c.mean) <= 1e-12


def test_plot_data_single_cell(tmp_path):
    cfg = ExperimentConfig([SamplerSpec("uniform", 1)], [0.1], repetitions=2,
                           model=SimulationModel("M1", LogNormal(), 200, 2))
    emit_plot_data(run_benchmark(cfg), tmp_path / "p.tsv")
    assert len((tmp_path / "p.tsv").read_text().splitlines()) == 3


def test_phase_report_roundtrip(tmp_path):
    cfg = ExperimentConfig([SamplerSpec("hms", 1)], [0.1], repetitions=2, tau_policy=TauPolicy("fixed", value=0.01),
                           model=SimulationModel("M1", StudentT(2.0), 300, 3))
    curve = phase_transition(cfg, [2.0, 3.0])
    save_report(curve, tmp_path / "c.json")
    assert load_report(tmp_path / "c.json").same_results(curve)
    emit_plot_data(curve, tmp_path / "c.tsv")
    assert len(read_plot_data(tmp_path / "c.tsv")) == 3 * 2 * 2


def test_load_config(tmp_path):
    data, _, _ = gen_dataset(SimulationModel("M1", LogNormal(), 50, 2), RngSeed(0))
    write_dataset_csv(data, tmp_path / "d.csv")
    p = write(tmp_path / "c.toml", """
repetitions = 4
base_seed = 9
sampling_ratios = [0.01, 0.02]

[model]
design = "M2"
noise = "t"
df = 3.0
n = 1000
d = 5

[tau]
policy = "sigma"
t = 2.0

[[methods]]
kind = "unif"

[[methods]]
kind = "slev"
alpha = 0.9

[[methods]]
kind = "hms"
burn_in = 7

[phase]
df = [1.5, 2.0]
""")
    cfg, raw = load_config(p)
    assert cfg.repetitions == 4 and cfg.base_seed == 9 and cfg.sampling_ratios == [0.01, 0.02]
    assert cfg.model == SimulationModel("M2", StudentT(3.0), 1000, 5)
    assert cfg.tau_policy == TauPolicy("sigma", t=2.0)
    assert [m.tag for m in cfg.methods] == ["UNIF", "SLEV0.9", "HMS"] and cfg.methods[2].burn_in == 7
    assert raw["phase"]["df"] == [1.5, 2.0]
    q = write(tmp_path / "real.toml", """
sampling_ratios = [0.1]
[data]
path = "d.csv"
target = "y"
[[methods]]
kind = "uniform"
""")
    cfg, _ = load_config(q)
    assert cfg.data_path == str(tmp_path / "d.csv") and cfg.schema == CsvSchema("y")
    assert run_benchmark(cfg).metric == "ape"
