"""Command-line entry point: ``hierpanel {simulate,mc-study,fit,bootstrap-ci}``.

Options can also come from a flat JSON config file (``--config``); flags on
the command line win.  Exit codes: 0 success, 2 invalid input or config,
3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import BootstrapError, bootstrap_ci
from .dgp import DgpSpec, generate
from .heterogeneous import fit_heterogeneous
from .homogeneous import fit_full
from .io import FORMATS, Report, Table, load_csv, render, truth_to_dict, write_csv, write_json
from .montecarlo import run_grid
from .panel import ModelConfig

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# every overridable option and its default
DEFAULTS = {
    "seed": 0,
    "dmax": 20,
    "omega": None,
    "tol": 1e-8,
    "max_iter": 1000,
    "format": "markdown",
    "out": None,
    "L": None,
    "T": None,
    "lG": 2,
    "reps": 1000,
    "jobs": 1,
    "timing": False,
    "csv": None,
    "mode": "homogeneous",
    "bootstrap_reps": 399,
    "block_length": None,
    "level": 0.05,
    "truth": None,
}


class ConfigError(ValueError):
    pass


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hierpanel", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hierpanel {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        sp.add_argument("--config", type=Path, help="flat JSON file of option values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--format", choices=FORMATS)
        sp.add_argument("--out", type=Path, help="output file (default: stdout)")
        sp.add_argument("-v", "--verbose", action="store_true")
        if model:
            sp.add_argument("--dmax", type=int)
            sp.add_argument("--omega", type=float)
            sp.add_argument("--tol", type=float)
            sp.add_argument("--max-iter", dest="max_iter", type=int)

    sp = sub.add_parser("simulate", help="simulate one panel and write it as CSV")
    common(sp, model=False)
    sp.add_argument("--L", type=int)
    sp.add_argument("--T", type=int)
    sp.add_argument("--lG", type=int)
    sp.add_argument("--truth", type=Path, help="ground-truth JSON path (default: <out>.truth.json)")

    sp = sub.add_parser("mc-study", help="Monte Carlo study over an (L, T) grid")
    common(sp)
    sp.add_argument("--L", type=_int_list)
    sp.add_argument("--T", type=_int_list)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--timing", action="store_const", const=True,
                    help="include wall times (makes reports non-reproducible)")

    sp = sub.add_parser("fit", help="fit a panel read from CSV")
    common(sp)
    sp.add_argument("--csv", type=Path)
    sp.add_argument("--mode", choices=("homogeneous", "heterogeneous"))

    sp = sub.add_parser("bootstrap-ci", help="moving-block bootstrap intervals for the slopes")
    common(sp)
    sp.add_argument("--csv", type=Path)
    sp.add_argument("--mode", choices=("homogeneous", "heterogeneous"))
    sp.add_argument("--bootstrap-reps", dest="bootstrap_reps", type=int)
    sp.add_argument("--block-length", dest="block_length", type=int)
    sp.add_argument("--level", type=float)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags take precedence)."""
    opts = dict(DEFAULTS)
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a flat JSON object")
        unknown = sorted(set(cfg) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        for k, v in cfg.items():
            if isinstance(v, (dict, list)) and k not in ("L", "T"):
                raise ConfigError(f"config value for {k!r} must be a scalar")
            opts[k] = v
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            opts[k] = v
    if opts["format"] not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    return opts


def model_config(opts: dict) -> ModelConfig:
    return ModelConfig(d_max=int(opts["dmax"]), tol_beta=float(opts["tol"]), max_iter=int(opts["max_iter"]),
                       omega_override=None if opts["omega"] is None else float(opts["omega"]),
                       seed=int(opts["seed"]))


def _meta(command: str, opts: dict, used: list[str]) -> dict:
    echo = {k: (str(opts[k]) if isinstance(opts[k], Path) else opts[k]) for k in used}
    return {"version": __version__, "command": command, "seed": opts["seed"], "config": echo}


def _emit(text: str, opts: dict) -> None:
    if opts["out"] is None:
        sys.stdout.write(text)
    else:
        Path(opts["out"]).write_text(text)


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join('--' + k for k in missing)}")


def cmd_simulate(opts: dict) -> None:
    _require(opts, "L", "T", "out")
    L = opts["L"][0] if isinstance(opts["L"], list) else opts["L"]
    T = opts["T"][0] if isinstance(opts["T"], list) else opts["T"]
    spec = DgpSpec(L=int(L), T=int(T), lG=int(opts["lG"]), seed=int(opts["seed"]))
    data, truth = generate(spec)
    out = Path(opts["out"])
    write_csv(data, out)
    sidecar = Path(opts["truth"]) if opts["truth"] else out.with_name(out.name + ".truth.json")
    doc = {"version": __version__, "seed": spec.seed, "spec": asdict(spec), **truth_to_dict(truth)}
    write_json(doc, sidecar)


def cmd_mc_study(opts: dict) -> str:
    _require(opts, "L", "T")
    Ls = opts["L"] if isinstance(opts["L"], list) else [int(opts["L"])]
    Ts = opts["T"] if isinstance(opts["T"], list) else [int(opts["T"])]
    cfg = model_config(opts)
    rep = run_grid(Ls, Ts, int(opts["reps"]), DgpSpec(L=Ls[0], T=Ts[0]), cfg,
                   base_seed=int(opts["seed"]), n_jobs=int(opts["jobs"]))
    cols = ["L", "T", "reps", "failures", "acc_lG", "acc_lS", "acc_lS_star",
            "rmse_beta", "rmse_FG", "rmse_FS", "nonconverged", "max_objective_rise"]
    if opts["timing"]:
        cols.append("wall_time")
    rows = [[getattr(c, k) for k in cols] for c in rep.cells]
    meta = _meta("mc-study", opts, ["L", "T", "reps", "dmax", "omega", "tol", "max_iter", "jobs"])
    meta["dgp"] = {k: v for k, v in asdict(rep.spec).items() if k not in ("L", "T", "seed")}
    return render(Report("Monte Carlo study", meta, [Table("cells", cols, rows)]), opts["format"])


def _shares_table(data, fit) -> Table:
    labels = data.labels
    t = Table("factors", ["layer", "name", "count", "pct_var"])
    sel, sh = fit.selection, fit.shares
    t.rows.append(["global", "all", sel.lG_hat, 100 * sh.global_share if sh else float("nan")])
    for i in range(data.L):
        name = labels.industries[i] if labels and labels.industries else str(i + 1)
        t.rows.append(["industry", name, sel.lS_hat[i], 100 * sh.specific_share[i] if sh else float("nan")])
    t.rows.append(["remainder", "", "", 100 * sh.remainder if sh else float("nan")])
    return t


def _var_names(data) -> list[str]:
    if data.labels and data.labels.variables:
        return list(data.labels.variables)
    return [f"x{k + 1}" for k in range(data.d_x)]


def _industry_names(data) -> list[str]:
    if data.labels and data.labels.industries:
        return list(data.labels.industries)
    return [str(i + 1) for i in range(data.L)]


def cmd_fit(opts: dict) -> str:
    _require(opts, "csv")
    data = load_csv(opts["csv"])
    cfg = model_config(opts)
    names = _var_names(data)
    meta = _meta("fit", opts, ["csv", "mode", "dmax", "omega", "tol", "max_iter"])
    meta.update(L=data.L, T=data.T, n_units=data.n_units, omega_used=cfg.omega_for(data))
    if opts["mode"] == "homogeneous":
        fit = fit_full(data, cfg)
        coef = Table("coefficients", ["variable", "estimate"], [[n, b] for n, b in zip(names, fit.beta)])
        meta.update(iterations=fit.iterations, converged=fit.converged)
    else:
        fit = fit_heterogeneous(data, cfg)
        coef = Table("coefficients", ["industry", *names, "lG", "lS"])
        for i, ind in enumerate(_industry_names(data)):
            coef.rows.append([ind, *fit.betas[i], fit.selection.lG_hat, fit.selection.lS_hat[i]])
        meta.update(converged=fit.converged)
    title = f"Hierarchical panel fit ({opts['mode']} slopes)"
    return render(Report(title, meta, [coef, _shares_table(data, fit)]), opts["format"])


def cmd_bootstrap(opts: dict) -> str:
    _require(opts, "csv")
    data = load_csv(opts["csv"])
    cfg = model_config(opts)
    res = bootstrap_ci(data, cfg, opts["mode"], B=int(opts["bootstrap_reps"]), level=float(opts["level"]),
                       block_length=opts["block_length"], seed=int(opts["seed"]))
    names = _var_names(data)
    meta = _meta("bootstrap-ci", opts, ["csv", "mode", "dmax", "omega", "tol", "max_iter",
                                         "bootstrap_reps", "block_length", "level"])
    meta.update(block_length_used=res.block_length, failures=res.failures, T=data.T)
    if res.mode == "homogeneous":
        t = Table("intervals", ["variable", "estimate", "ci_lower", "ci_upper"])
        for k, n in enumerate(names):
            t.rows.append([n, res.point[k], res.ci_lower[k], res.ci_upper[k]])
    else:
        t = Table("intervals", ["industry", "variable", "estimate", "ci_lower", "ci_upper"])
        for i, ind in enumerate(_industry_names(data)):
            for k, n in enumerate(names):
                t.rows.append([ind, n, res.point[i, k], res.ci_lower[i, k], res.ci_upper[i, k]])
    title = "Moving block bootstrap confidence intervals"
    return render(Report(title, meta, [t]), opts["format"])


def _provenance(exc: BaseException) -> str:
    tb = exc.__traceback__
    name = "hierpanel"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("hierpanel"):
            name = mod
        tb = tb.tb_next
    return name


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve(args)
        if args.command == "simulate":
            cmd_simulate(opts)
        else:
            handler = {"mc-study": cmd_mc_study, "fit": cmd_fit, "bootstrap-ci": cmd_bootstrap}[args.command]
            _emit(handler(opts), opts)
    except (np.linalg.LinAlgError, BootstrapError, FloatingPointError, MemoryError) as exc:
        print(f"numeric error [{_provenance(exc)}]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"invalid input [{_provenance(exc)}]: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error [{_provenance(exc)}]: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - last resort
        traceback.print_exc()
        print(f"error [{_provenance(exc)}]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
