"""Command-line interface.

Subcommands cover the library's main surfaces: noise simulation, resolvent
verification, filtering (memory / Kalman-Bucy / integral-equation),
parameter estimation, the portfolio strategy and the Monte Carlo filter
benchmark.  All CSV output uses '.' decimals, ',' separators and a header
row; JSON configs are documented by the schema files in ``schemas/``.
"""

import argparse
import csv
import dataclasses
import json
import sys

import numpy as np

from .core import Grid, RandomStream, make_grid
from .estimation import empirical_u, fit_ou_params, fit_pq
from .filters import SystemSpec, integrate_riccati, kalman_bucy, run_filter
from .harness import ThetaPreset, monte_carlo_compare, preset_thetas
from .noise import MemoryParams, resolvent_residual, simulate_v, simulate_v_innovation
from .portfolio import MarketSpec, run_strategy, simulate_market
from .volterra import ObservationKernelSpec, build_gamma_for_system, run_filter_volterra, solve_error_table

FLOAT_FMT = "%.12g"


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([FLOAT_FMT % v if isinstance(v, float) else v for v in row])


def _read_samples(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", ndmin=1)
    return np.asarray(data, dtype=float).ravel()


def _memory_params(obj, key) -> MemoryParams:
    try:
        sub = obj[key]
        return MemoryParams(float(sub["p"]), float(sub["q"]))
    except KeyError as exc:
        raise SystemExit(f"config: missing field {exc} under {key!r}")


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _system_from_config(cfg) -> tuple[SystemSpec, Grid]:
    try:
        spec = SystemSpec(
            theta=float(cfg["theta"]),
            sigma=float(cfg["sigma"]),
            mu=float(cfg["mu"]),
            x0_mean=float(cfg.get("x0_mean", 0.0)),
            x0_var=float(cfg.get("x0_var", 0.0)),
            noise1=_memory_params(cfg, "noise1"),
            noise2=_memory_params(cfg, "noise2"),
        )
        grid = make_grid(float(cfg["T"]), float(cfg["dt"]))
    except KeyError as exc:
        raise SystemExit(f"config: missing field {exc}")
    return spec, grid


def _cmd_simulate_noise(args):
    params = MemoryParams(args.p, args.q)
    grid = make_grid(args.T, args.dt)
    simulate = simulate_v if args.scheme == "state" else simulate_v_innovation
    rows = []
    for path_id in range(args.paths):
        path = simulate(params, grid, RandomStream(args.seed, path_id))
        for t, w, m, v in zip(grid.nodes, path.driver, path.memory_state, path.v):
            rows.append((path_id, float(t), float(w), float(m), float(v)))
    _write_csv(args.out, ["path", "t", "W_or_B", "memory_state", "V"], rows)


def _cmd_check_resolvent(args):
    params = MemoryParams(args.p, args.q)
    grid = make_grid(args.T, args.dt)
    res_lk, res_kl = resolvent_residual(params, grid)
    print(json.dumps({
        "p": args.p, "q": args.q, "T": args.T, "dt": args.dt,
        "residual_lk": res_lk, "residual_kl": res_kl,
    }))


def _filter_rows(grid, zhat, p):
    rows = []
    for i, t in enumerate(grid.nodes):
        rows.append((
            float(t), float(zhat[i, 0]), float(zhat[i, 1]), float(zhat[i, 2]),
            float(p[i, 0, 0]), float(p[i, 0, 1]), float(p[i, 0, 2]),
            float(p[i, 1, 1]), float(p[i, 1, 2]), float(p[i, 2, 2]),
        ))
    return rows


def _cmd_filter(args):
    cfg = _load_json(args.config)
    spec, grid = _system_from_config(cfg)
    y = _read_samples(args.obs)
    header = ["t", "zhat1", "zhat2", "zhat3", "P11", "P12", "P13", "P22", "P23", "P33"]
    if args.method == "memory":
        traj = run_filter(spec, grid, y)
        _write_csv(args.out, header, _filter_rows(grid, traj.zhat, traj.p))
    elif args.method == "volterra":
        gamma = build_gamma_for_system(spec, grid)
        obs = ObservationKernelSpec.for_system(spec)
        table = solve_error_table(gamma, obs, grid)
        zhat = run_filter_volterra(table, obs, y, grid)
        idx = np.arange(grid.count + 1)
        _write_csv(args.out, header, _filter_rows(grid, zhat, table.p[idx, idx]))
    else:
        xtilde, gam = kalman_bucy(spec.theta, spec.sigma, spec.mu,
                                  spec.x0_mean, spec.x0_var, grid, y)
        rows = [(float(t), float(x), float(g)) for t, x, g in zip(grid.nodes, xtilde, gam)]
        _write_csv(args.out, ["t", "xtilde", "gamma"], rows)


def _cmd_estimate_pq(args):
    v = _read_samples(args.infile)
    result = fit_pq(empirical_u(v, args.max_lag))
    with open(args.out, "w") as fh:
        json.dump(dataclasses.asdict(result), fh, indent=2)
        fh.write("\n")


def _cmd_estimate_ou(args):
    x = _read_samples(args.infile)
    result = fit_ou_params(x, args.max_lag)
    with open(args.out, "w") as fh:
        json.dump(dataclasses.asdict(result), fh, indent=2)
        fh.write("\n")


def _cmd_portfolio(args):
    cfg = _load_json(args.config)
    try:
        spec = MarketSpec(
            s0=float(cfg.get("s0", 1.0)),
            theta=float(cfg["theta"]),
            sigma=float(cfg["sigma"]),
            rho_mean=float(cfg.get("rho_mean", 0.0)),
            rho_var=float(cfg.get("rho_var", 0.0)),
            noise1=_memory_params(cfg, "noise1"),
            noise2=_memory_params(cfg, "noise2"),
        )
        grid = make_grid(float(cfg["T"]), float(cfg["dt"]))
    except KeyError as exc:
        raise SystemExit(f"config: missing field {exc}")
    capital = float(cfg.get("initial_capital", 1.0))
    bundle = simulate_market(spec, grid, (RandomStream(args.seed, 0), RandomStream(args.seed, 1)))
    strat = run_strategy(spec, capital, grid, bundle.y)
    rows = []
    for i, t in enumerate(grid.nodes):
        rows.append((
            float(t), float(strat.zhat[i, 0]), float(strat.zhat[i, 1]), float(strat.zhat[i, 2]),
            float(strat.lhat[i]), float(strat.pi0[i]), float(strat.wealth[i]),
        ))
    _write_csv(args.out, ["t", "Uhat", "alpha1hat", "alpha2hat", "Lhat", "pi0", "wealth"], rows)


def _cmd_compare(args):
    if args.preset == "all":
        presets = preset_thetas()
    elif args.preset == "custom":
        missing = [k for k in ("p1", "q1", "p2", "q2") if getattr(args, k) is None]
        if missing:
            raise SystemExit(f"--preset custom requires --{' --'.join(missing)}")
        presets = [ThetaPreset("custom", args.p1, args.q1, args.p2, args.q2)]
    else:
        presets = [t for t in preset_thetas() if t.label == args.preset]
        if not presets:
            raise SystemExit(f"unknown preset {args.preset!r}")
    grid = make_grid(args.T, args.dt)
    import os

    os.makedirs(args.out_dir, exist_ok=True)
    aen_rows = []
    for preset in presets:
        report = monte_carlo_compare(preset, args.runs, grid, args.seed)
        aen_rows.append((preset.label, float(report.aen_optimal), float(report.aen_kb)))
        rows = [
            (float(t), float(a), float(b))
            for t, a, b in zip(grid.nodes[1:], report.ae_optimal, report.ae_kb)
        ]
        _write_csv(os.path.join(args.out_dir, f"ae_{preset.label}.csv"),
                   ["t", "ae_optimal", "ae_kb"], rows)
        print(f"{preset.label}: aen_optimal={report.aen_optimal:.4f} aen_kb={report.aen_kb:.4f}")
    _write_csv(os.path.join(args.out_dir, "aen.csv"),
               ["preset", "aen_optimal", "aen_kb"], aen_rows)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memfilter",
        description="Filtering, estimation and portfolio tools for systems driven by two-parameter memory noise.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate-noise", help="simulate memory-noise paths to CSV")
    sim.add_argument("--p", type=float, required=True)
    sim.add_argument("--q", type=float, required=True)
    sim.add_argument("--T", type=float, required=True)
    sim.add_argument("--dt", type=float, required=True)
    sim.add_argument("--paths", type=int, default=1)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--scheme", choices=["state", "innovation"], default="state")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=_cmd_simulate_noise)

    chk = sub.add_parser("check-resolvent", help="print both resolvent-identity residuals as JSON")
    chk.add_argument("--p", type=float, required=True)
    chk.add_argument("--q", type=float, required=True)
    chk.add_argument("--T", type=float, required=True)
    chk.add_argument("--dt", type=float, required=True)
    chk.set_defaults(func=_cmd_check_resolvent)

    flt = sub.add_parser("filter", help="run a filter over an observation CSV")
    flt.add_argument("--config", required=True, help="system config JSON (see schemas/)")
    flt.add_argument("--obs", required=True, help="CSV with one Y value per line, starting at 0")
    flt.add_argument("--method", choices=["memory", "kb", "volterra"], default="memory")
    flt.add_argument("--out", required=True)
    flt.set_defaults(func=_cmd_filter)

    epq = sub.add_parser("estimate-pq", help="fit (p, q) to unit-spaced samples")
    epq.add_argument("--in", dest="infile", required=True)
    epq.add_argument("--max-lag", type=int, default=30)
    epq.add_argument("--out", required=True)
    epq.set_defaults(func=_cmd_estimate_pq)

    eou = sub.add_parser("estimate-ou", help="fit (p, q, theta, sigma) to unit-spaced samples")
    eou.add_argument("--in", dest="infile", required=True)
    eou.add_argument("--max-lag", type=int, default=30)
    eou.add_argument("--out", required=True)
    eou.set_defaults(func=_cmd_estimate_ou)

    pf = sub.add_parser("portfolio", help="simulate a market and export the optimal strategy path")
    pf.add_argument("--config", required=True, help="market config JSON (see schemas/)")
    pf.add_argument("--seed", type=int, default=0)
    pf.add_argument("--out", required=True)
    pf.set_defaults(func=_cmd_portfolio)

    cmp_ = sub.add_parser("compare", help="Monte Carlo comparison of memory filter vs Kalman-Bucy")
    cmp_.add_argument("--preset", default="all",
                      help="theta1..theta5, custom, or all (default)")
    cmp_.add_argument("--runs", type=int, default=100)
    cmp_.add_argument("--seed", type=int, default=0)
    cmp_.add_argument("--T", type=float, default=10.0)
    cmp_.add_argument("--dt", type=float, default=0.01)
    cmp_.add_argument("--p1", type=float)
    cmp_.add_argument("--q1", type=float)
    cmp_.add_argument("--p2", type=float)
    cmp_.add_argument("--q2", type=float)
    cmp_.add_argument("--out-dir", required=True)
    cmp_.set_defaults(func=_cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
