"""Command-line interface: ``pottsfit <subcommand> [options]``.

Options can also come from a JSON object passed with ``--config``; its keys
are the option names with dashes replaced by underscores, and flags given on
the command line take precedence. Every run writes the fully resolved
options next to its output so it can be repeated from the outputs alone.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .cv import GRID_I, GRID_J, CvGrid, cross_validate, cross_validate_ridge
from .evaluate import (fitness_benchmark, landscape, mean_reports, read_fitness_csv,
                       selection_metrics, write_pair_dependency)
from .model import delta_e_multi, load, parse_mutation_spec, save
from .msa import (FORMATS, SequenceWeightConfig, encode, encode_states, parse_alignment,
                  read_states_csv, write_states_csv)
from .sampler import GibbsConfig
from .solver import FitConfig, fit_all, kkt_residual
from .structure import (KERNELS, distance_matrix, group_weights, parse_coordinates,
                        read_matrix_csv, write_matrix_csv)
from .study import METHODS, TUNING, StudyConfig, run_study, simulate

logger = logging.getLogger("pottsfit")

SUBCOMMANDS = ("simulate", "fit", "cv", "eval", "landscape", "predict", "pairdep")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for per-site fits")
    p.add_argument("--config", help="JSON file of option defaults")
    p.add_argument("-v", "--verbose", action="store_true")


def _alignment_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alignment", required=True, help="alignment file")
    p.add_argument("--format", default="auto", choices=("auto", "states-csv") + FORMATS,
                   help="alignment format (auto: by file extension)")
    p.add_argument("--K", type=int, help="number of non-reference states (states-csv only)")
    p.add_argument("--wildtype", help="wild-type sequence (default: first sequence)")
    p.add_argument("--min-count", type=int, default=10,
                   help="states seen fewer times are excluded")
    p.add_argument("--seq-weights", default="hamming", choices=("hamming", "uniform"))
    p.add_argument("--hamming-threshold", type=float, default=0.2)
    p.add_argument("--distances", help="d x d distance matrix CSV")
    p.add_argument("--coords", help="coordinate file (csv-xyz or pdb)")
    p.add_argument("--coords-format", default="csv-xyz", choices=("csv-xyz", "pdb-ca"))
    p.add_argument("--kernel", choices=KERNELS,
                   help="distance kernel for group weights (default N1 with a structure, "
                        "else none)")
    p.add_argument("--weights-n", default="raw", choices=("raw", "effective"),
                   help="sample size in the group weights: row count or sum of sequence weights")
    p.add_argument("--lam", type=float, default=0.0, help="element-wise penalty level")
    p.add_argument("--lam-g", type=float, default=0.0, help="group penalty level")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--lasso-only", action="store_true", help="drop the group penalty")
    mode.add_argument("--group-only", action="store_true", help="drop the element-wise penalty")
    mode.add_argument("--ridge", type=float, metavar="LEVEL",
                      help="ridge baseline with this squared-norm penalty")
    p.add_argument("--tol-outer", type=float, default=1e-5)
    p.add_argument("--tol-middle", type=float, default=1e-5)
    p.add_argument("--tol-inner", type=float, default=1e-7)
    p.add_argument("--max-outer", type=int, default=200)
    p.add_argument("--max-middle", type=int, default=5)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--grid-i", type=float, nargs="+", default=list(GRID_I))
    p.add_argument("--grid-j", type=float, nargs="+", default=list(GRID_J))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pottsfit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic data set")
    _common(p)
    p.add_argument("--setting", default="M1", choices=("M1", "M2"))
    p.add_argument("--d", type=int, default=25)
    p.add_argument("--K", type=int, default=20)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--tau", type=float, help="M2 edge budget (default depends on d)")
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fit", help="estimate Potts parameters")
    _common(p)
    _alignment_opts(p)
    p.add_argument("--cv", action="store_true", help="choose penalties by cross-validation")
    p.add_argument("--out", required=True, help="parameter file to write")
    p.add_argument("--diagnostics", help="per-site JSON-lines log (default: OUT.diag.jsonl)")
    p.add_argument("--cv-table", help="CV table path (default: OUT.cv.csv)")

    p = sub.add_parser("cv", help="cross-validate the penalty levels")
    _common(p)
    _alignment_opts(p)
    p.add_argument("--out", required=True, help="CV table CSV to write")

    p = sub.add_parser("eval", help="score estimates against ground truth")
    _common(p)
    p.add_argument("--estimate", nargs="+", default=[], help="estimated parameter files")
    p.add_argument("--truth", nargs="+", default=[], help="true parameter files (paired)")
    p.add_argument("--fitness", help="site,target_symbol,value CSV for a Spearman benchmark")
    p.add_argument("--study", action="store_true", help="run a replicated simulation study")
    p.add_argument("--setting", default="M1", choices=("M1", "M2"))
    p.add_argument("--d", type=int, default=25)
    p.add_argument("--K", type=int, default=5)
    p.add_argument("--n", type=int, nargs="+", default=[500, 1000, 2000])
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--methods", nargs="+", default=["ours", "sgl", "ridge"], choices=METHODS)
    p.add_argument("--tuning", default="pilot", choices=TUNING)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--out", required=True, help="report JSON to write")

    p = sub.add_parser("landscape", help="single-mutation energy changes")
    _common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True, help="CSV to write")

    p = sub.add_parser("predict", help="energy changes of mutations such as '3:2,7:5'")
    _common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--mutations", nargs="*", default=[], help="mutation specs")
    p.add_argument("--mutations-file", help="file with one mutation spec per line")
    p.add_argument("--out", required=True, help="CSV to write")

    p = sub.add_parser("pairdep", help="pair dependency table for two sites")
    _common(p)
    p.add_argument("--params", required=True)
    p.add_argument("--sites", type=int, nargs=2, required=True, metavar=("J", "R"),
                   help="two 1-based sites")
    p.add_argument("--out", required=True, help="CSV to write")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    """Parse flags with defaults taken from ``--config`` when given."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in SUBCOMMANDS), None)
    if known.config and command:
        try:
            with open(known.config) as fh:
                defaults = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {known.config}: {exc}") from exc
        if not isinstance(defaults, dict):
            raise CliError("config file must hold a JSON object")
        defaults.pop("command", None)
        defaults.pop("config", None)
        sub = parser._subparsers._group_actions[0].choices[command]
        dests = {a.dest for a in sub._actions}
        unknown = sorted(set(defaults) - dests)
        if unknown:
            raise CliError(f"unknown config keys for {command}: {', '.join(unknown)}")
        sub.set_defaults(**defaults)
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
    return parser.parse_args(argv)


def echo_config(args: argparse.Namespace, path) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
    with open(path, "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sidecar(out, suffix: str) -> Path:
    out = Path(out)
    return out.with_name(out.name + suffix)


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> None:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {out}: {exc}") from exc
    gibbs = GibbsConfig(burn_in=args.burn_in, thin=args.thin)
    truth, states = simulate(args.setting, args.d, args.K, args.n, args.seed, args.tau, gibbs)
    write_states_csv(states, out / "alignment.csv")
    save(truth.params, out / "truth.params")
    write_matrix_csv(truth.distances, out / "distances.csv")
    write_matrix_csv(truth.adjacency, out / "adjacency.csv")
    echo_config(args, out / "config.json")
    logger.info("wrote %d sequences, %d true edges to %s", args.n, truth.n_edges, out)


def _load_encoded(args):
    path = Path(args.alignment)
    if not path.exists():
        raise CliError(f"alignment {path} not found")
    fmt = args.format
    if fmt == "auto":
        fmt = {".csv": "states-csv", ".a2m": "a2m", ".txt": "plain-rows"}.get(
            path.suffix.lower(), "fasta")
    wcfg = (SequenceWeightConfig(args.hamming_threshold)
            if args.seq_weights == "hamming" else None)
    if fmt == "states-csv":
        states = read_states_csv(path)
        return encode_states(states, args.K, min_count=args.min_count, weight_cfg=wcfg)
    aln = parse_alignment(path, fmt)
    return encode(aln, args.wildtype, min_count=args.min_count, weight_cfg=wcfg)


def _distances(args, d: int):
    if args.distances and args.coords:
        raise CliError("give either --distances or --coords, not both")
    if args.distances:
        D = read_matrix_csv(args.distances)
    elif args.coords:
        D = distance_matrix(parse_coordinates(args.coords, args.coords_format))
    else:
        return None
    if D.shape != (d, d):
        raise CliError(f"structure has d={D.shape[0]} sites but the alignment has d={d}")
    return D


def _fit_config(args, encoded) -> FitConfig:
    D = _distances(args, encoded.d)
    kind = args.kernel or ("N1" if D is not None else "none")
    weights = None
    if args.ridge is None:
        if kind != "none" and D is None:
            raise CliError(f"kernel {kind} needs --distances or --coords")
        if D is None:
            D = np.zeros((encoded.d, encoded.d))
        n = encoded.n if args.weights_n == "raw" else encoded.effective_n
        weights = group_weights(D, n, encoded.K ** 2, kind)
    penalty = "sparse-group"
    if args.lasso_only:
        penalty = "lasso-only"
    elif args.group_only:
        penalty = "group-only"
    elif args.ridge is not None:
        penalty = "ridge"
    return FitConfig(lam=args.lam, lam_g=args.lam_g, weights=weights, penalty_kind=penalty,
                     ridge_lambda=args.ridge or 0.0, tol_outer=args.tol_outer,
                     tol_middle=args.tol_middle, tol_inner=args.tol_inner,
                     max_outer=args.max_outer, max_middle=args.max_middle)


def _run_cv(args, encoded, cfg: FitConfig):
    if cfg.penalty_kind == "ridge":
        values = [2.0 ** j for j in args.grid_j]
        return cross_validate_ridge(encoded, values, cfg, folds=args.folds, seed=args.seed,
                                    threads=args.threads)
    I = (0.0,) if cfg.penalty_kind == "lasso-only" else tuple(args.grid_i)
    if cfg.penalty_kind == "group-only":
        I = (1.0,)
    grid = CvGrid(I=I, J=tuple(args.grid_j), folds=args.folds)
    return cross_validate(encoded, grid, cfg, seed=args.seed, threads=args.threads)


def _apply_levels(cfg: FitConfig, best) -> FitConfig:
    if cfg.penalty_kind == "ridge":
        return replace(cfg, ridge_lambda=best[1])
    return cfg.with_penalty(*best)


def cmd_cv(args) -> None:
    encoded = _load_encoded(args)
    cfg = _fit_config(args, encoded)
    res = _run_cv(args, encoded, cfg)
    res.write_csv(args.out)
    with open(_sidecar(args.out, ".best.json"), "w") as fh:
        json.dump({"lambda_g": res.best[0], "lambda": res.best[1],
                   "heldout_nll": res.best_score}, fh, indent=2)
    echo_config(args, _sidecar(args.out, ".config.json"))
    print(f"selected lambda_g={res.best[0]!r} lambda={res.best[1]!r}")


def cmd_fit(args) -> None:
    encoded = _load_encoded(args)
    cfg = _fit_config(args, encoded)
    if args.cv:
        res = _run_cv(args, encoded, cfg)
        res.write_csv(args.cv_table or _sidecar(args.out, ".cv.csv"))
        cfg = _apply_levels(cfg, res.best)
        args.lam_g, args.lam = cfg.lam_g, cfg.lam
        if cfg.penalty_kind == "ridge":
            args.ridge = cfg.ridge_lambda
        print(f"selected lambda_g={res.best[0]!r} lambda={res.best[1]!r}")
    params, fits = fit_all(encoded, cfg, threads=args.threads, return_fits=True)
    save(params, args.out)
    with open(args.diagnostics or _sidecar(args.out, ".diag.jsonl"), "w") as fh:
        for f in fits:
            fh.write(json.dumps({
                "site": f.site + 1, "status": f.status, "iterations": f.n_iter,
                "objective": f.objective, "trace": [float(v) for v in f.trace],
                "active_groups": sorted(r + 1 for r in f.active_groups),
                "screened": sorted(r + 1 for r in f.screened),
                "excluded_states": list(f.degenerate_states),
                "kkt": kkt_residual(f, encoded, cfg)}) + "\n")
    echo_config(args, _sidecar(args.out, ".config.json"))
    bad = [f.site + 1 for f in fits if not f.converged]
    if bad:
        logger.warning("sites without convergence: %s", bad)


def _load_params(path):
    try:
        return load(path)
    except FileNotFoundError:
        raise CliError(f"parameter file {path} not found") from None


def cmd_eval(args) -> None:
    report: dict = {}
    if args.study:
        cfg = StudyConfig(setting=args.setting, d=args.d, K=args.K, ns=tuple(args.n),
                          replicates=args.replicates, methods=tuple(args.methods),
                          tuning=args.tuning, grid=CvGrid(folds=args.folds), seed=args.seed)
        res = run_study(cfg, threads=args.threads)
        res.write_csv(_sidecar(args.out, ".replicates.csv"))
        report["study"] = {f"{m}@n={n}": _safe(res.means(n, m))
                           for n in cfg.ns for m in cfg.methods}
    if args.truth:
        if not args.estimate:
            raise CliError("eval needs --estimate for the given truth")
        if len(args.truth) not in (1, len(args.estimate)):
            raise CliError("give one truth file or one per estimate")
        truths = args.truth * len(args.estimate) if len(args.truth) == 1 else args.truth
        reps = [selection_metrics(_load_params(e), _load_params(t))
                for e, t in zip(args.estimate, truths)]
        report["replicates"] = [r.to_dict() for r in reps]
        report["mean"] = _safe(mean_reports(reps))
    if args.fitness:
        if len(args.estimate) != 1:
            raise CliError("the fitness benchmark needs exactly one --estimate")
        params = _load_params(args.estimate[0])
        bench = fitness_benchmark(params, read_fitness_csv(args.fitness, params))
        bench.write_csv(_sidecar(args.out, ".fitness.csv"))
        report["spearman"] = None if np.isnan(bench.rho) else bench.rho
    if args.estimate and not (args.truth or args.fitness):
        raise CliError("give --truth or --fitness to evaluate the estimates")
    if not report:
        raise CliError("nothing to evaluate: give --estimate/--truth, --fitness or --study")
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    echo_config(args, _sidecar(args.out, ".config.json"))


def _safe(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in d.items()}


def cmd_landscape(args) -> None:
    landscape(_load_params(args.params)).write_csv(args.out)
    echo_config(args, _sidecar(args.out, ".config.json"))


def cmd_predict(args) -> None:
    params = _load_params(args.params)
    specs = list(args.mutations)
    if args.mutations_file:
        with open(args.mutations_file) as fh:
            specs += [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    rows = [(text, repr(delta_e_multi(params, parse_mutation_spec(text, params))))
            for text in specs]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mutation", "delta_e"])
        writer.writerows(rows)
    echo_config(args, _sidecar(args.out, ".config.json"))


def cmd_pairdep(args) -> None:
    params = _load_params(args.params)
    j, r = (s - 1 for s in args.sites)
    for s in args.sites:
        if not 1 <= s <= params.d:
            raise CliError(f"site {s} out of range 1..{params.d}")
    write_pair_dependency(params, j, r, args.out)
    echo_config(args, _sidecar(args.out, ".config.json"))


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "cv": cmd_cv, "eval": cmd_eval,
            "landscape": cmd_landscape, "predict": cmd_predict, "pairdep": cmd_pairdep}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"pottsfit: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("pottsfit: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        COMMANDS[args.command](args)
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        print(f"pottsfit: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
