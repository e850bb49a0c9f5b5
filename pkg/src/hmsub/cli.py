"""Command-line entry point: ``hmsub <command> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from hmsub import __version__
from hmsub.data import RngSeed
from hmsub.evaluation import phase_transition, run_benchmark
from hmsub.huber import HuberConfig, fit_huber_irls, fit_ols
from hmsub.io import (
    PRESETS,
    CsvSchema,
    RunManifest,
    emit_plot_data,
    file_digest,
    load_config,
    load_csv,
    load_report,
    save_report,
    standardize_features,
    write_dataset_csv,
)
from hmsub.samplers import SamplerSpec, pilot_estimate, run_sampler
from hmsub.synthetic import LogNormal, SimulationModel, StudentT, ZeroNoise, gen_dataset


def _now():
    return datetime.now(timezone.utc).isoformat()


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("HMS_SEED")
    return int(env) if env else 0


def _noise(args):
    if args.noise == "lognormal":
        return LogNormal(0.0, 1.0)
    if args.noise == "t":
        return StudentT(args.df)
    return ZeroNoise()


def _schema(args) -> CsvSchema:
    if args.preset:
        return PRESETS[args.preset]
    target = int(args.target) if args.target.isdigit() else args.target
    drops = tuple(int(c) if c.isdigit() else c for c in (args.drop or ()))
    return CsvSchema(target, drops, not args.no_header, args.delimiter)


def _manifest(args, cfg_hash, input_path, started, settings, out):
    digest = file_digest(input_path) if input_path else None
    m = RunManifest(cfg_hash, _seed(args), __version__, digest, started, _now(), args.argv, settings)
    if out:
        m.write(Path(str(out) + ".manifest.json"))
    return m


def _standardize(args) -> bool:
    # on by default for CSV input, off for synthetic data
    if args.standardize is not None:
        return args.standardize
    return bool(args.input)


def _load_input(args, seed):
    if args.input:
        std = _standardize(args)
        loaded = load_csv(args.input, _schema(args), intercept=not args.no_intercept, standardize=std)
        return loaded.data
    model = SimulationModel(args.design, _noise(args), args.n, args.d)
    data, _, _ = gen_dataset(model, RngSeed(seed))
    if _standardize(args):
        data = standardize_features(data)
    return data if args.no_intercept else data.with_intercept()


def cmd_simulate(args) -> int:
    started = _now()
    seed = _seed(args)
    model = SimulationModel(args.design, _noise(args), args.n, args.d)
    data, truth, _ = gen_dataset(model, RngSeed(seed))
    write_dataset_csv(data, args.out)
    Path(str(args.out) + ".truth.json").write_text(json.dumps({"beta_star": truth.beta_star.tolist()}))
    _manifest(args, None, None, started, {"model": model.label, "n": args.n, "d": args.d}, args.out)
    return 0


def cmd_fit(args) -> int:
    started = _now()
    data = _load_input(args, _seed(args))
    if args.loss == "ols":
        fit = fit_ols(data)
    else:
        fit = fit_huber_irls(data, HuberConfig(args.tau, args.tol, args.max_iter))
    out = {
        "beta": fit.beta.tolist(),
        "converged": fit.converged,
        "iterations": fit.iterations,
        "final_loss": fit.final_loss,
        "ridge": fit.ridge,
        "intercept_included": data.intercept_included,
    }
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    settings = {"loss": args.loss, "tau": args.tau, "standardize": _standardize(args)}
    _manifest(args, None, args.input, started, settings, args.out)
    return 0


def cmd_subsample(args) -> int:
    started = _now()
    seed = RngSeed(_seed(args))
    data = _load_input(args, _seed(args))
    spec = SamplerSpec(args.method, args.n_sub, alpha=args.alpha, tau=args.tau, burn_in=args.burn_in)
    pilot = None
    if spec.needs_pilot:
        pilot = pilot_estimate(data, args.n0 or args.n_sub, seed.generator(1)).beta
    sel, _ = run_sampler(spec, data, pilot, seed.generator(2))
    lines = "\n".join(str(i) for i in sel.indices.tolist()) + "\n"
    if args.out:
        Path(args.out).write_text(lines)
    else:
        sys.stdout.write(lines)
    settings = {"method": spec.tag, "n_sub": spec.n_sub, "tau": spec.tau, "burn_in": spec.effective_burn_in,
                "standardize": _standardize(args)}
    _manifest(args, None, args.input, started, settings, args.out)
    return 0


def _config_with_seed(args):
    cfg, raw = load_config(args.config)
    if args.seed is not None or "HMS_SEED" in os.environ and "base_seed" not in raw:
        cfg.base_seed = _seed(args)
    if args.repetitions:
        cfg.repetitions = args.repetitions
    return cfg, raw


def cmd_benchmark(args) -> int:
    started = _now()
    cfg, _ = _config_with_seed(args)
    report = run_benchmark(cfg, jobs=args.jobs)
    flat = save_report(report, args.out)
    if args.plot_data:
        emit_plot_data(report, args.plot_data)
    _manifest(args, cfg.config_hash(), cfg.data_path, started, {"flat_csv": str(flat)}, args.out)
    for c in report.cells:
        mean = "failed" if c.mean is None else f"{c.mean:.6g} ± {c.std:.3g}"
        print(f"{c.method:>8s} sr={c.sr:<6g} {report.metric}={mean} (K={c.k_effective})")
    return 0


def cmd_phase(args) -> int:
    started = _now()
    cfg, raw = _config_with_seed(args)
    dfs = args.df or raw.get("phase", {}).get("df", [1.5, 2.0, 3.0])
    curve = phase_transition(cfg, dfs, jobs=args.jobs)
    save_report(curve, args.out)
    if args.plot_data:
        emit_plot_data(curve, args.plot_data)
    _manifest(args, cfg.config_hash(), None, started, {"df": dfs}, args.out)
    for row in curve.rows():
        print("  ".join(f"{k}={v:.5g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    return 0


def cmd_plot_data(args) -> int:
    emit_plot_data(load_report(args.report), args.out)
    return 0


def _add_data_opts(p):
    p.add_argument("--input", help="CSV file; without it a synthetic dataset is generated")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--target", default="y")
    p.add_argument("--drop", nargs="*")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--no-header", action="store_true")
    p.add_argument("--no-intercept", action="store_true")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None,
                   help="center/scale features (default: on for --input, off for synthetic data)")
    _add_model_opts(p, n=1000, d=5)


def _add_model_opts(p, n, d):
    p.add_argument("--design", default="M1", choices=["M1", "M2"])
    p.add_argument("--noise", default="lognormal", choices=["lognormal", "t", "none"])
    p.add_argument("--df", type=float, default=2.0)
    p.add_argument("--n", type=int, default=n)
    p.add_argument("--d", type=int, default=d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hmsub", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed (falls back to $HMS_SEED, then 0)")

    p = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset as CSV")
    _add_model_opts(p, n=10000, d=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="Huber or OLS fit of a CSV dataset")
    _add_data_opts(p)
    p.add_argument("--loss", choices=["huber", "ols"], default="huber")
    p.add_argument("--tau", type=float, default=1.345)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("subsample", parents=[common], help="print selected row indices, one per line")
    _add_data_opts(p)
    p.add_argument("--method", required=True,
                   choices=["unif", "uniform", "lev", "leverage", "slev", "levunw", "gs", "gradient",
                            "is", "influence", "hms"])
    p.add_argument("--n-sub", type=int, required=True)
    p.add_argument("--n0", type=int, help="pilot size (default n_sub)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_subsample)

    for name, func, helptext in (
        ("benchmark", cmd_benchmark, "run an experiment grid from a TOML config"),
        ("phase", cmd_phase, "phase-transition experiment over Student-t degrees of freedom"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--plot-data", help="also write long-format TSV here")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--repetitions", type=int, help="override K from the config")
        if name == "phase":
            p.add_argument("--df", type=float, nargs="+")
        p.set_defaults(func=func)

    p = sub.add_parser("plot-data", parents=[common], help="convert a saved report to long-format TSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot_data)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except Exception as exc:
        print(f"hmsub {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
