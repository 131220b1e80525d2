"""Command-line interface: ``sdridge <subcommand> [options]``.

Every subcommand writes one table (CSV with a fixed header, or JSON) to
``--output`` or standard output. Errors go to standard error with a nonzero
exit status.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .asymptotics import SpectralModel, theory_curve
from .errors import SDRidgeError
from .io import (
    SIM_SUMMARY_SCHEMA,
    load_config_file,
    load_csv,
    merge_config,
    split,
    standardize,
    write_json,
    write_table,
)
from .ridge import (
    Dataset,
    GeneralizedRidge,
    KernelRidge,
    OrdinaryRidge,
    RidgeFit,
    RidgeSolver,
    mixed_label_fit,
)
from .structural import optimal_mix, risk_components_empirical
from .tuning import tune_grid
from .variants import (
    FreshXProblem,
    OracleRisk,
    TestSetRisk,
    fresh_affine_components,
    fresh_mixed_scan,
    multiround,
    smoother_sd,
)

# options that RunConfig understands; everything else is subcommand-specific
_COMMON = ("input", "target_col", "lambda_min", "lambda_max", "lambda_points", "lambdas",
           "split_ratio", "split_mode", "seed", "output", "format")


def _add_common(p, data=True, split_opts=True):
    p.add_argument("--config", help="JSON config file; explicit flags override its values")
    if data:
        p.add_argument("--input", help="CSV file with numeric columns")
        p.add_argument("--target-col", help="target column name or index (default: last column)")
        p.add_argument("--no-header", dest="has_header", action="store_false", default=None,
                       help="the CSV has no header row")
        p.add_argument("--no-standardize", dest="standardize", action="store_false", default=None,
                       help="skip train-statistic standardization")
    if split_opts:
        p.add_argument("--split-ratio", type=float, help="training fraction (default 0.7)")
        p.add_argument("--split-mode", choices=("random", "sequential"))
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--lambda-points", type=int)
    p.add_argument("--lambda", dest="lambdas", type=float, action="append",
                   help="explicit lambda value (repeatable); overrides the log grid")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", "-o", help="output path (default: standard output)")
    p.add_argument("--format", choices=("csv", "json"))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sdridge",
        description="Optimal self-distillation for ridge regression.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="teacher (or mixed-label SD) coefficients at one lambda")
    _add_common(p, split_opts=False)
    p.add_argument("--xi", type=float, default=0.0, help="mixing weight (0 = teacher)")

    p = sub.add_parser("sd-curve", help="test-set R, R_pd, C, D, xi*, R_sd* per lambda")
    _add_common(p)

    p = sub.add_parser("tune", help="one-shot GCV estimates per lambda (training data only)")
    _add_common(p, split_opts=False)
    p.add_argument("--stabilizer", type=float, default=0.0)

    p = sub.add_parser("asymptotics", help="deterministic-equivalent curves")
    _add_common(p, data=False, split_opts=False)
    p.add_argument("--isotropic", action="store_true", help="identity covariance, isotropic signal")
    p.add_argument("--spectrum", help="CSV with columns sigma_eig,beta_proj (no target)")
    p.add_argument("--gamma", type=float, help="aspect ratio p/n")
    p.add_argument("--snr", type=float, default=1.0, help="r^2 / sigma^2 (isotropic)")
    p.add_argument("--noise-var", type=float, default=1.0)
    p.add_argument("--p", type=int, default=1000, help="dimension used to discretize the isotropic model")

    p = sub.add_parser("simulate", help="Monte-Carlo run: empirical, GCV and theory curves")
    _add_common(p, data=False, split_opts=False)
    _add_sim_args(p)

    p = sub.add_parser("multiround", help="recursive or anchored multi-round SD")
    _add_common(p)
    p.add_argument("--rounds", type=int, default=2)
    p.add_argument("--mode", choices=("recursive", "anchored"), default="recursive")
    p.add_argument("--risk-source", choices=("test", "gcv"), default="test")

    p = sub.add_parser("kernel", help="optimal SD for kernel or generalized ridge")
    _add_common(p)
    p.add_argument("--kernel-bandwidth", default="median", help="'median' or a positive number")
    p.add_argument("--omega", help="CSV file with a p x p penalty matrix (selects generalized ridge)")

    p = sub.add_parser("compare-fresh", help="same-X vs fresh-X SD on simulated isotropic data")
    _add_common(p, data=False, split_opts=False)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--m", type=int, help="fresh sample size (default n)")
    p.add_argument("--snr", type=float, default=1.0)
    p.add_argument("--noise-var", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--xi-min", type=float, default=-100.0)
    p.add_argument("--xi-max", type=float, default=100.0)
    p.add_argument("--xi-points", type=int, default=3001)
    return parser


def _add_sim_args(p):
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--p", type=int, default=200)
    p.add_argument("--cov", choices=("isotropic", "ar1", "spiked"), default="isotropic")
    p.add_argument("--rho", type=float, default=0.25)
    p.add_argument("--spike-strength", type=float, default=5.0)
    p.add_argument("--signal", choices=("isotropic", "top_aligned", "bottom_aligned"), default="isotropic")
    p.add_argument("--ratio-pct", type=float, default=10.0)
    p.add_argument("--factor", type=float, default=0.9)
    p.add_argument("--snr", type=float, default=1.0)
    p.add_argument("--noise-var", type=float, default=1.0)
    p.add_argument("--reps", type=int, default=30)
    p.add_argument("--entry-dist", choices=("gaussian", "rademacher"), default="gaussian")


# ---------------------------------------------------------------------------


def _config(args):
    flags = {k: getattr(args, k, None) for k in _COMMON + ("has_header", "standardize")}
    file_values = load_config_file(args.config) if getattr(args, "config", None) else None
    return merge_config(args.command, flags, file_values)


def _need_input(cfg):
    if not cfg.input:
        raise SDRidgeError("--input is required for this subcommand")
    return load_csv(cfg.input, cfg.target_col, cfg.has_header)


def _train_test(cfg):
    data = _need_input(cfg)
    train, test = split(data, cfg.split_ratio, cfg.split_mode, cfg.seed)
    if cfg.standardize:
        train, test, _ = standardize(train, test)
    return train, test


def _whole(cfg):
    data = _need_input(cfg)
    if cfg.standardize:
        data, _, _ = standardize(data, data)
    return data


def cmd_fit(args, cfg):
    data = _whole(cfg)
    lam = float(cfg.lambda_grid()[0]) if cfg.lambdas else float(cfg.lambda_min)
    fit = mixed_label_fit(data, lam, args.xi)
    names = data.meta.get("feature_names") or [f"x{j}" for j in range(data.p)]
    rows = [(j, names[j], float(c)) for j, c in enumerate(fit.coef)]
    write_table(cfg.output, "fit", rows, cfg.format, {"lambda": lam, "xi": args.xi})


def cmd_sd_curve(args, cfg):
    train, test = _train_test(cfg)
    solver = RidgeSolver(train)
    fam = OrdinaryRidge(solver)
    rows = []
    for lam in cfg.lambda_grid():
        teacher = RidgeFit(lam, solver.coef(lam), fam)
        pd = RidgeFit(lam, solver.coef(lam, power=2), fam)
        rc = risk_components_empirical(teacher, pd, test)
        mix = optimal_mix(rc)
        rows.append((lam, rc.r_teacher, rc.r_pd, rc.c_cross, rc.d_gap, mix.xi_star, mix.r_sd_star,
                     mix.degenerate))
    write_table(cfg.output, "sd-curve", rows, cfg.format, {"n_train": train.n, "n_test": test.n})


def cmd_tune(args, cfg):
    data = _whole(cfg)
    grid = cfg.lambda_grid()
    est = tune_grid(data, grid, stabilizer=args.stabilizer)
    if len(est) < grid.size:
        print(f"sdridge: skipped {grid.size - len(est)} lambda values where df/n is too close to 1",
              file=sys.stderr)
    rows = [(e.lam, e.df, e.df_pd, e.r_hat, e.r_pd_hat, e.c_hat, e.d_hat, e.xi_hat, e.r_sd_hat, e.degenerate)
            for e in est]
    write_table(cfg.output, "tune", rows, cfg.format, {"n": data.n, "p": data.p})


def cmd_asymptotics(args, cfg):
    if args.gamma is None or not args.gamma > 0:
        raise SDRidgeError("--gamma (p/n) must be given and positive")
    if args.isotropic == bool(args.spectrum):
        raise SDRidgeError("give exactly one of --isotropic or --spectrum")
    if args.isotropic:
        model = SpectralModel.isotropic(args.p, args.snr * args.noise_var, args.noise_var, args.gamma)
    else:
        spec = np.loadtxt(args.spectrum, delimiter=",", ndmin=2, comments="#")
        if spec.shape[1] != 2:
            raise SDRidgeError("--spectrum needs two columns: sigma_eig, beta_proj")
        model = SpectralModel(spec[:, 0], spec[:, 1], args.noise_var, args.gamma)
    cur = theory_curve(model, cfg.lambda_grid())
    rows = list(zip(cur.lambdas, cur.kappa, cur.r_teacher, cur.r_pd, cur.c_cross, cur.d_gap,
                    cur.xi_star, cur.r_sd_star, cur.degenerate))
    write_table(cfg.output, "asymptotics", rows, cfg.format,
                {"gamma": args.gamma, "noise_var": args.noise_var, "r2": model.r2})


def cmd_simulate(args, cfg):
    from .sim import CovarianceSpec, SignalSpec, SimConfig, run_simulation

    sc = SimConfig(
        n=args.n, p=args.p,
        cov=CovarianceSpec(args.cov, args.p, rho=args.rho, strength=args.spike_strength, spike_seed=cfg.seed),
        sig=SignalSpec(args.signal, r2=args.snr * args.noise_var, ratio_pct=args.ratio_pct, factor=args.factor),
        noise_var=args.noise_var, lambda_grid=tuple(cfg.lambda_grid()), reps=args.reps, seed=cfg.seed,
        entry_dist=args.entry_dist,
    )
    res = run_simulation(sc)
    if cfg.format == "json":
        write_json(cfg.output, res.summary(), SIM_SUMMARY_SCHEMA)
    elif cfg.output in (None, "-"):
        import csv

        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["rep", "lambda", "metric", "value"])
        for rep, lam, metric, value in res.long_rows():
            w.writerow([rep, repr(lam), metric, repr(value)])
    else:
        res.write_csv(cfg.output)
    for rep, lam, msg in res.errors:
        print(f"sdridge: rep {rep}, lambda {lam:.6g}: {msg}", file=sys.stderr)


def cmd_multiround(args, cfg):
    train, test = _train_test(cfg)
    solver = RidgeSolver(train)
    source = TestSetRisk(test) if args.risk_source == "test" else "gcv"
    rows = []
    for lam in cfg.lambda_grid():
        states = multiround(train, lam, args.rounds, args.mode, source, solver=solver)
        last = states[-1]
        for k, risk in enumerate(last.risk_history):
            xi = last.xi_history[k - 1] if k > 0 else 0.0
            deg = last.degenerate_history[k - 1] if k > 0 else False
            rows.append((lam, k, xi, risk, deg))
    write_table(cfg.output, "multiround", rows, cfg.format,
                {"mode": args.mode, "risk_source": args.risk_source})


def cmd_kernel(args, cfg):
    train, test = _train_test(cfg)
    if args.omega:
        omega = np.loadtxt(args.omega, delimiter=",", ndmin=2, comments="#")
        family = GeneralizedRidge(train.X, omega)
    else:
        bw = args.kernel_bandwidth
        family = KernelRidge(train.X, bw if bw == "median" else float(bw))
    rows = []
    for lam in cfg.lambda_grid():
        res = smoother_sd(family, train, lam, test)
        rows.append((lam, res.r_teacher, res.r_sd_star, res.xi_star, res.degenerate))
    meta = {"family": family.kind}
    if isinstance(family, KernelRidge):
        meta["bandwidth"] = family.bandwidth
    write_table(cfg.output, "kernel", rows, cfg.format, meta)


def cmd_compare_fresh(args, cfg):
    from .sim import make_rng

    n, p = args.n, args.p
    m = args.m or n
    r2 = args.snr * args.noise_var
    grid = cfg.lambda_grid()
    xis = np.linspace(args.xi_min, args.xi_max, args.xi_points)
    acc = np.zeros((grid.size, 7))
    for rep in range(args.reps):
        rng = make_rng(cfg.seed, rep)
        X = rng.standard_normal((n, p))
        beta = rng.standard_normal(p) * np.sqrt(r2 / p)
        y = X @ beta + np.sqrt(args.noise_var) * rng.standard_normal(n)
        Xf = rng.standard_normal((m, p))
        train = Dataset(X, y)
        solver = RidgeSolver(train)
        oracle = OracleRisk(np.eye(p), beta, args.noise_var)
        for i, lam in enumerate(grid):
            same = optimal_mix(oracle.components(solver.coef(lam), solver.coef(lam, power=2)))
            prob = FreshXProblem(train, Xf, lam, solver)
            aff = optimal_mix(fresh_affine_components(prob, oracle))
            scan = fresh_mixed_scan(prob, xis, oracle.risk)
            acc[i] += (oracle.risk(prob.teacher), same.r_sd_star, same.xi_star, aff.r_sd_star, aff.xi_star,
                       scan.best_risk, scan.best_xi)
    acc /= args.reps
    rows = [(lam, *vals) for lam, vals in zip(grid, acc)]
    write_table(cfg.output, "compare-fresh", rows, cfg.format,
                {"n": n, "p": p, "m": m, "snr": args.snr, "reps": args.reps})


COMMANDS = {
    "fit": cmd_fit,
    "sd-curve": cmd_sd_curve,
    "tune": cmd_tune,
    "asymptotics": cmd_asymptotics,
    "simulate": cmd_simulate,
    "multiround": cmd_multiround,
    "kernel": cmd_kernel,
    "compare-fresh": cmd_compare_fresh,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg)
    except (SDRidgeError, OSError, ValueError) as exc:
        print(f"sdridge {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
