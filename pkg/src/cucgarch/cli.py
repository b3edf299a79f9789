"""Command line interface: ``cucgarch <subcommand> [flags]``.

Every run writes ``run_manifest.json`` next to its outputs.  Failures also
write ``error.json`` and exit with 2 (bad arguments or unreadable input),
3 (invalid data), 4 (non-convergence) or 1 (anything else).
"""

from __future__ import annotations

import argparse
import csv
import logging
import platform
import sys
import time
import traceback
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy

from . import __version__
from .baselines import fit_dcc, fit_ogarch
from .bootstrap import BootConfig, confidence_set_A, existence_test, param_intervals, residual_pools, run_bootstrap
from .cuc import CucConfig
from .data_io import ReturnPanel, load_model, load_returns, save_model, whiten, write_json
from .diagnostics import cross_product_table, ljung_box, q_pvalue_bootstrap
from .errors import ConvergenceError, DataError, ParseError
from .garch import QuasiDensity
from .model import FitConfig, fit_cuc_garch
from .reconstruction import portfolio_vol, reconstruct_H, write_paths
from .simulator import SimConfig, StudyConfig, monte_carlo_study, simulate_cuc_garch

logger = logging.getLogger("cucgarch")

EXIT_OK, EXIT_INTERNAL, EXIT_PARSE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse hook
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _probability(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def _weights(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad weight list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", help="CSV of returns (rows = time, columns = assets)")
    common.add_argument("--out", default=".", help="output directory, or a .json/.csv file whose folder receives the rest")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive_int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    est = _Parser(add_help=False)
    est.add_argument("--k0", type=_positive_int, default=1)
    est.add_argument("--epsilon0", type=float, default=None)
    est.add_argument("--weighted", action="store_true", help="use the ball-weighted objective")
    est.add_argument("--restarts", type=int, default=10)
    est.add_argument("--tol-D", dest="tol_D", type=float, default=1e-4)
    est.add_argument("--max-evals", type=_positive_int, default=None)
    est.add_argument("--sup-or-sum", dest="aggregate", choices=("sup", "sum"), default="sup")
    est.add_argument("--nu", type=int, default=10)
    est.add_argument("--estimator", choices=("qmle", "lade"), default="qmle")
    est.add_argument("--density", choices=("normal", "t", "ged"), default="normal")
    est.add_argument("--density-shape", type=float, default=None)
    est.add_argument("--select-bic", action="store_true")
    est.add_argument("--max-add", type=int, default=None)

    boot = _Parser(add_help=False)
    boot.add_argument("--boot-B", dest="boot_B", type=_positive_int, default=99)
    boot.add_argument("--boot-burnin", dest="boot_burnin", type=int, default=500)
    boot.add_argument("--alpha", type=_probability, default=0.1)

    p = _Parser(prog="cucgarch", description="CUC-GARCH volatility modelling")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("whiten", parents=[common], help="write the whitened panel and its transform")
    sub.add_parser("fit", parents=[common, est], help="fit a CUC-GARCH model")
    sub.add_parser("boot-test", parents=[common, est, boot], help="bootstrap existence test").add_argument("--model", required=True)
    sub.add_parser("conf-set", parents=[common, est, boot], help="bootstrap confidence set for A").add_argument("--model", required=True)
    d = sub.add_parser("diagnose", parents=[common, est, boot], help="Ljung-Box and cross-product Q tests")
    d.add_argument("--model", required=True)
    d.add_argument("--lags", type=_positive_int, default=10)
    b = sub.add_parser("baseline", parents=[common], help="O-GARCH or DCC reference fit")
    b.add_argument("--model", choices=("ogarch", "dcc"), required=True)
    b.add_argument("--nu", type=int, default=10)
    b.add_argument("--dcc-target", choices=("residuals", "data"), default="residuals")
    for name, text in (("simulate", "simulate the three-component reference design"), ("mc-study", "Monte Carlo accuracy study")):
        s = sub.add_parser(name, parents=[common, est], help=text)
        s.add_argument("--n", type=_positive_int, default=1000)
        s.add_argument("--burn-in", type=int, default=1000)
        s.add_argument("--innovation", choices=("normal", "t"), default="normal")
        s.add_argument("--df", type=float, default=5.0)
        s.add_argument("--replications", type=_positive_int, default=1 if name == "simulate" else 50)
    sub.choices["mc-study"].add_argument("--use-true-A", action="store_true")
    pf = sub.add_parser("portfolio", parents=[common], help="portfolio variance paths from a fitted model")
    pf.add_argument("--model", required=True)
    pf.add_argument("--weights", type=_weights, required=True, help="comma-separated weights b1")
    pf.add_argument("--weights2", type=_weights, default=None, help="second weight vector for a covariance")
    return p


# --- helpers -------------------------------------------------------------


def _out_paths(out: str, default_name: str) -> tuple[Path, Path]:
    target = Path(out)
    if target.suffix in (".json", ".csv"):
        return target.parent, target
    return target, target / default_name


def _fit_config(a) -> FitConfig:
    cuc = CucConfig(
        restarts=a.restarts, tol_D=a.tol_D, max_evals=a.max_evals, seed=a.seed,
        weighted=a.weighted or a.epsilon0 is not None, aggregate=a.aggregate,
    )
    try:
        density = QuasiDensity(a.density, a.density_shape)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    return FitConfig(
        k0=a.k0, epsilon0=a.epsilon0, cuc=cuc, nu=a.nu, estimator=a.estimator,
        density=density, select_bic=a.select_bic, max_add=a.max_add,
    )


def _require_input(a) -> ReturnPanel:
    if not a.input:
        raise UsageError("--input is required")
    return load_returns(a.input)


def _boot_config(a, model) -> BootConfig:
    cfg = _fit_config(a)
    return BootConfig(
        B=a.boot_B, burn_in=a.boot_burnin, seed=a.seed, k0=model.k0, epsilon0=a.epsilon0,
        cuc=cfg.cuc, refit_garch=True, estimator=model.estimator, nu=model.nu, workers=a.threads,
    )


def _write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(x), ".17g") if isinstance(x, (float, np.floating)) else x for x in row])


def _model_inputs(a):
    model = load_model(a.model)
    panel = _require_input(a)
    if panel.d != model.d:
        raise DataError(f"input has {panel.d} columns, model has {model.d}")
    X = model.whiten.apply(panel.values)
    Z = X @ model.A_hat
    return model, panel, X, Z


# --- subcommands ---------------------------------------------------------


def cmd_whiten(a, out_dir: Path, primary: Path, manifest: dict) -> int:
    panel = _require_input(a)
    Xp, tr = whiten(panel)
    csv_path = out_dir / "whitened.csv"
    idx = panel.timestamps or [str(t + 1) for t in range(panel.n)]
    _write_rows(csv_path, ["t", *[f"x{j + 1}" for j in range(panel.d)]], [[i, *r] for i, r in zip(idx, Xp.values)])
    write_json({"mean": tr.mean, "eigvecs": tr.eigvecs, "eigvals": tr.eigvals}, primary)
    manifest["outputs"] = [str(csv_path), str(primary)]
    return EXIT_OK


def cmd_fit(a, out_dir: Path, primary: Path, manifest: dict) -> int:
    panel = _require_input(a)
    res = fit_cuc_garch(panel, _fit_config(a))
    save_model(res.model, primary)
    paths = reconstruct_H(res.model, res.cuc_var)
    files = write_paths(paths, out_dir, panel.labels, panel.timestamps)
    manifest["outputs"] = [str(primary), *map(str, files.values())]
    manifest["result"] = {"objective": res.model.objective, "converged": res.converged}
    if not res.converged:
        logger.error("estimation did not converge; outputs written but flagged")
        return EXIT_CONVERGENCE
    return EXIT_OK


def _bootstrap_outputs(a, manifest: dict):
    model, panel, X, Z = _model_inputs(a)
    cfg = _boot_config(a, model)
    pools = residual_pools(model, Z)
    draws = run_bootstrap(X, model, pools, cfg)
    manifest["result"] = {"B": cfg.B, "failures": draws.failures}
    return model, X, pools, cfg, draws


def _intervals(draws, alpha: float) -> dict:
    try:
        return {k: list(v) for k, v in param_intervals(draws.theta, alpha).items()}
    except DataError as exc:
        logger.warning("parameter intervals skipped: %s", exc)
        return {}


def cmd_boot_test(a, out_dir: Path, primary: Path, manifest: dict) -> int:
    model, X, pools, cfg, draws = _bootstrap_outputs(a, manifest)
    alphas = sorted({0.01, 0.05, 0.10, a.alpha})
    res = existence_test(X, model, pools, cfg, alphas=alphas, draws=draws)
    payload = {
        "psi_obs": res.observed,
        "psi_star": res.statistics,
        "p_value": res.p_value,
        "c_alpha": {format(k, "g"): v for k, v in res.c_alpha.items()},
        "reject": {format(k, "g"): v for k, v in res.reject.items()},
        "intervals": _intervals(draws, a.alpha),
        "B": res.B,
        "seed": res.seed,
        "failures": res.failures,
    }
    write_json(payload, primary)
    manifest["outputs"] = [str(primary)]
    return EXIT_OK


def cmd_conf_set(a, out_dir: Path, primary: Path, manifest: dict) -> int:
    model, X, pools, cfg, draws = _bootstrap_outputs(a, manifest)
    levels = sorted({0.05, 0.10, a.alpha})
    c = {}
    for lv in levels:
        try:
            c[format(lv, "g")] = confidence_set_A(draws.D_star, lv)
        except DataError as exc:
            logger.warning("c_alpha at %g skipped: %s", lv, exc)
    payload = {"A_hat": model.A_hat, "c_alpha": c, "D_star": draws.D_star, "intervals": _intervals(draws, a.alpha), "B": cfg.B, "seed": cfg.seed}
    write_json(payload, primary)
    manifest["outputs"] = [str(primary)]
    return EXIT_OK


def cmd_diagnose(a, out_dir: Path, primary: Path, manifest: dict) -> int:
    model, panel, X, Z = _model_inputs(a)
    Y = panel.values - panel.values.mean(axis=0)
    M = a.lags
    variants = {"cuc_garch": reconstruct_H(model, model.cuc_variances(Z)).H}
    variants["ogarch"] = fit_ogarch(panel, nu=model.nu)[1].H
    if panel.d >= 2:
        variants["dcc"] = fit_dcc(panel, nu=model.nu)[1].H
    tables = {k: cross_product_table(Y, H, M) for k, H in variants.items()}
    keys = list(next(iter(tables.values())).Q)
    header = ["i", "j", "M"]
    for k in tables:
        header += [f"{k}_Q", f"{k}_p", f"{k}_flag"]
    rows = []
    for key in keys:
        row = list(key)
        for t in tables.values():
            row += [t.Q[key], t.p_values[key], t.flags[key]]
        rows.append(row)
    _write_rows(primary, header, rows)
    lb_rows = []
    for j in range(panel.d):
        qb = q_pvalue_bootstrap(Y[:, j], M, a.boot_B, seed=a.seed + j)
        lb_rows.append([panel.labels[j], M, ljung_box(Y[:, j], M), qb.p_value])
    lb_path = out_dir / "ljung_box.csv"
    _write_rows(lb_path, ["series", "K", "Q", "p_bootstrap"], lb_rows)
    manifest["outputs"] = [str(primary), str(lb_path)]
    return EXIT_OK


def cmd_baseline(a, out_dir: Path, primary: Path, manifest: dict) -> int:
    panel = _require_input(a)
    if a.model == "ogarch":
        model, paths = fit_ogarch(panel, nu=a.nu)
        info = {"components": [p.to_dict() for p in model.components]}
    else:
        params, paths = fit_dcc(panel, nu=a.nu, S_source=a.dcc_target)
        info = {
            "theta1": params.theta1, "theta2": params.theta2, "S": params.S, "S_source": params.S_source,
            "at_boundary": params.at_boundary, "marginals": [p.to_dict() for p in params.marginals],
        }
    files = write_paths(paths, out_dir, panel.labels, panel.timestamps, prefix=f"{a.model}_")
    json_path = out_dir / f"{a.model}.json"
    write_json(info, json_path)
    manifest["outputs"] = [str(json_path), *map(str, files.values())]
    return EXIT_OK


def _sim_config(a) -> SimConfig:
    return SimConfig.reference(
        a.n, burn_in=a.burn_in, innovation=a.innovation, df=a.df, replications=a.replications, seed=a.seed
    )


def cmd_simulate(a, out_dir: Path, primary: Path, manifest: dict) -> int:
    sim = _sim_config(a)
    panel, Z, S = simulate_cuc_garch(sim)
    d = panel.d
    _write_rows(primary, [f"x{j + 1}" for j in range(d)], panel.values.tolist())
    truth = out_dir / "simulated_truth.csv"
    _write_rows(truth, [*(f"z{j + 1}" for j in range(d)), *(f"sigma2_{j + 1}" for j in range(d))], np.hstack([Z, S]).tolist())
    manifest["outputs"] = [str(primary), str(truth)]
    return EXIT_OK


def cmd_mc_study(a, out_dir: Path, primary: Path, manifest: dict) -> int:
    sim = _sim_config(a)
    fc = _fit_config(a)
    cfg = StudyConfig(sim, k0=a.k0, nu=a.nu, cuc=fc.cuc, use_true_A=a.use_true_A, workers=a.threads)
    rows, summary = monte_carlo_study(cfg)
    cols = [k for k in summary if isinstance(summary[k], dict)]
    stats = ["mean", "median", "std", "bias", "rmse"]
    table = [[s, *(summary[c].get(s, float("nan")) for c in cols), summary["replications"], summary["seed"]] for s in stats]
    _write_rows(primary, ["statistic", *cols, "replications", "seed"], table)
    reps = out_dir / "mc_replications.csv"
    _write_rows(reps, list(rows[0]), [list(r.values()) for r in rows])
    manifest["outputs"] = [str(primary), str(reps)]
    manifest["result"] = {"replications": summary["replications"], "failures": summary["failures"]}
    return EXIT_OK


def cmd_portfolio(a, out_dir: Path, primary: Path, manifest: dict) -> int:
    model, panel, X, Z = _model_inputs(a)
    v = portfolio_vol(model, model.cuc_variances(Z), a.weights, a.weights2)
    idx = panel.timestamps or [str(t + 1) for t in range(panel.n)]
    name = "variance" if a.weights2 is None else "covariance"
    _write_rows(primary, ["t", name], [[i, x] for i, x in zip(idx, v)])
    manifest["outputs"] = [str(primary)]
    return EXIT_OK


COMMANDS = {
    "whiten": (cmd_whiten, "whiten.json"),
    "fit": (cmd_fit, "model.json"),
    "boot-test": (cmd_boot_test, "test.json"),
    "conf-set": (cmd_conf_set, "conf_set.json"),
    "diagnose": (cmd_diagnose, "diagnostics.csv"),
    "baseline": (cmd_baseline, "baseline.json"),
    "simulate": (cmd_simulate, "simulated.csv"),
    "mc-study": (cmd_mc_study, "mc_study.csv"),
    "portfolio": (cmd_portfolio, "portfolio.csv"),
}


def _guess_out(argv: Sequence[str]) -> str:
    for i, tok in enumerate(argv):
        if tok == "--out" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--out="):
            return tok.split("=", 1)[1]
    return "."


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (UsageError, ParseError)):
        return EXIT_PARSE
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, ConvergenceError):
        return EXIT_CONVERGENCE
    return EXIT_INTERNAL


def run(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    t0 = time.perf_counter()
    manifest: dict = {
        "argv": argv,
        "versions": {"cucgarch": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
    }
    out_dir, primary = _out_paths(_guess_out(argv), "output.json")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        args = exc
    code = EXIT_INTERNAL
    try:
        if isinstance(args, UsageError):
            raise args
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        fn, default_name = COMMANDS[args.command]
        out_dir, primary = _out_paths(args.out, default_name)
        out_dir.mkdir(parents=True, exist_ok=True)
        manifest["command"] = args.command
        manifest["seed"] = args.seed
        manifest["config"] = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in vars(args).items()}
        code = fn(args, out_dir, primary, manifest)
    except Exception as exc:  # every failure becomes an exit code and error.json
        code = _exit_code(exc)
        if code == EXIT_INTERNAL:
            logger.error("internal error:\n%s", traceback.format_exc())
        else:
            print(f"cucgarch: error: {exc}", file=sys.stderr)
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        manifest["error"] = err
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_json(err, out_dir / "error.json")
        except OSError:
            pass
    finally:
        manifest["exit_code"] = code
        manifest["timings"] = {"total_seconds": time.perf_counter() - t0}
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            write_json(manifest, out_dir / "run_manifest.json")
        except (OSError, DataError, TypeError):
            logger.warning("could not write the run manifest")
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
