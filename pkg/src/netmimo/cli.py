"""Experiment runner: reproduces the evaluation tables as CSV files.

Subcommands: bin-rates, optimize-map, throughput-sweep, validate, schedule.
Outputs are byte-stable for a fixed configuration and seed regardless of
the thread count. Exit codes: 0 success, 1 configuration error,
2 numerical failure (including failed validation tolerances).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotic import SchemeConfig, group_rate
from .channel import make_scenario, stats_for
from .config import load_config
from .errors import (ConfigurationError, DomainError, FeasibilityError,
                     NetMimoError, NumericalError, SingularRealizationError)
from .montecarlo import (estimate_rates, partial_trace_profile,
                         sample_precoder)
from .optimizer import (baseline_massive_net, baseline_net, best_loading,
                        optimize_bin)
from .scheduler import per_user_rates, schedule, system_throughput


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".12g")
    return "" if value is None else str(value)


def write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _coord_header(layout):
    return ["x"] if layout.dimension == 1 else ["x_km", "y_km"]


def _coord_row(layout, rep):
    if layout.dimension == 1:
        return [float(rep[0])]
    return [float(v) for v in layout.to_physical(rep)]


def _scheme_rate(cfg_file, layout, rep, entry, system, family):
    """Closed-form (scheme, S, rate) for one scheme entry at one bin."""
    F, C, J, Q = int(entry["F"]), int(entry["C"]), int(entry["J"]), int(entry["Q"])
    if entry["S"] == "auto":
        s_star, _, rate = best_loading(layout, cfg_file.pathloss, system, rep,
                                       family, F, C, J, Q)
        return SchemeConfig(F, C, J, Q, s_star, system.M), rate
    s = float(entry["S"])
    scn = make_scenario(layout, cfg_file.pathloss, rep, F=F, C=C, Q=Q, S=s,
                        M=system.M, L=system.L, alpha_ul=system.alpha_ul,
                        U=system.U, sinr_cap=system.sinr_cap,
                        cluster_mode=family.cluster_mode)
    cfg = SchemeConfig(F, C, J, Q, s, system.M)
    return cfg, group_rate(scn, cfg)


def _mc_scenario(cfg_file, layout, rep, cfg, system, family):
    return make_scenario(layout, cfg_file.pathloss, rep, F=cfg.F, C=cfg.C,
                         Q=cfg.Q, S=cfg.S, M=system.M, L=system.L,
                         alpha_ul=system.alpha_ul, U=system.U,
                         sinr_cap=system.sinr_cap,
                         cluster_mode=family.cluster_mode)


def cmd_bin_rates(cfg_file, out, args):
    layout = cfg_file.build_layout()
    reps = cfg_file.bin_representatives(layout)
    run = cfg_file.run
    rows = []
    for k, rep in enumerate(reps):
        for entry in run.schemes:
            cfg, rate = _scheme_rate(cfg_file, layout, rep, entry,
                                     cfg_file.system, cfg_file.family)
            row = [k, *_coord_row(layout, rep), cfg.F, cfg.C, cfg.J, cfg.Q,
                   cfg.S, rate.group_rate, rate.net_rate]
            if run.trials > 0:
                scn = _mc_scenario(cfg_file, layout, rep, cfg,
                                   cfg_file.system, cfg_file.family)
                est = estimate_rates(scn, cfg, N=run.system_size,
                                     trials=run.trials, seed=run.seed,
                                     threads=run.threads, batch=run.batch)
                row += [est.group_rate, est.group_se, est.trials]
            else:
                row += [None, None, None]
            rows.append(row)
    header = ["bin_id", *_coord_header(layout), "F", "C", "J", "Q", "S",
              "group_rate", "net_rate", "mc_group_rate", "mc_se", "mc_trials"]
    path = write_csv(out / "bin_rates.csv", header, rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_optimize_map(cfg_file, out, args):
    layout = cfg_file.build_layout()
    reps = cfg_file.bin_representatives(layout)
    rows = []
    for k, rep in enumerate(reps):
        opt = optimize_bin(layout, cfg_file.pathloss, cfg_file.system, rep,
                           cfg_file.family, bin_id=k)
        base = baseline_net(layout, cfg_file.pathloss, cfg_file.system, rep,
                            cfg_file.family)
        cfg = opt.config
        rows.append([k, *_coord_row(layout, rep), cfg.F, cfg.C, cfg.J, cfg.Q,
                     cfg.S, opt.net_rate, opt.group_rate, base,
                     opt.net_rate / base])
    header = ["bin_id", *_coord_header(layout), "F", "C", "J", "Q", "S_star",
              "net_rate", "group_rate", "baseline_net", "gain_ratio"]
    path = write_csv(out / "optimize_map.csv", header, rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def _pf_throughput(nets, bandwidth):
    plan = schedule(np.asarray(nets), "pf")
    return system_throughput(plan, bandwidth)


def cmd_throughput_sweep(cfg_file, out, args):
    layout = cfg_file.build_layout()
    reps = cfg_file.bin_representatives(layout)
    run = cfg_file.run
    if not run.m_values:
        raise ConfigurationError("run.m_values is required for throughput-sweep")
    labels = [f"F{e['F']}C{e['C']}J{e['J']}Q{e['Q']}" for e in run.schemes]
    bw = cfg_file.system.bandwidth_hz
    asym = _pf_throughput(
        [baseline_massive_net(layout, cfg_file.pathloss, cfg_file.system, rep)
         for rep in reps], bw)
    rows = []
    for m_val in run.m_values:
        system = dataclasses.replace(cfg_file.system, M=float(m_val))
        row = [float(m_val)]
        for entry in run.schemes:
            nets = []
            for rep in reps:
                try:
                    _, rate = _scheme_rate(cfg_file, layout, rep, entry,
                                           system, cfg_file.family)
                    nets.append(rate.net_rate)
                except (FeasibilityError, ConfigurationError):
                    nets = None
                    break
            row.append(_pf_throughput(nets, bw) if nets and min(nets) > 0 else None)
        opt_nets = [optimize_bin(layout, cfg_file.pathloss, system, rep,
                                 cfg_file.family, bin_id=k).net_rate
                    for k, rep in enumerate(reps)]
        base_nets = [baseline_net(layout, cfg_file.pathloss, system, rep,
                                  cfg_file.family) for rep in reps]
        row.append(_pf_throughput(opt_nets, bw))
        row.append(_pf_throughput(base_nets, bw))
        row.append(asym)
        rows.append(row)
    header = (["M"] + labels + ["bin_optimized", "baseline", "baseline_asymptote"])
    path = write_csv(out / "throughput_sweep.csv", header, rows)
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def cmd_validate(cfg_file, out, args):
    layout = cfg_file.build_layout()
    reps = cfg_file.bin_representatives(layout)
    run = cfg_file.run
    if run.trials < 1:
        raise ConfigurationError("validate needs run.trials >= 1")
    report = [f"netmimo {__version__} validation report",
              f"seed={run.seed} trials={run.trials} N={run.system_size}"]
    failures = 0
    rows = []
    for entry in run.schemes:
        for k, rep in enumerate(reps):
            cfg, rate = _scheme_rate(cfg_file, layout, rep, entry,
                                     cfg_file.system, cfg_file.family)
            scn = _mc_scenario(cfg_file, layout, rep, cfg, cfg_file.system,
                               cfg_file.family)
            est = estimate_rates(scn, cfg, N=run.system_size, trials=run.trials,
                                 seed=run.seed, threads=run.threads,
                                 batch=run.batch)
            rel = abs(est.group_rate - rate.group_rate) / rate.group_rate
            tol = max(run.mc_rel_tolerance,
                      3.0 * est.group_se / rate.group_rate)
            ok = rel <= tol
            failures += not ok
            rows.append([cfg.label, k, rate.group_rate, est.group_rate,
                         est.group_se, rel, tol, "pass" if ok else "FAIL"])
            report.append(
                f"{cfg.label} bin {k}: closed={rate.group_rate:.6g} "
                f"mc={est.group_rate:.6g} (se {est.group_se:.3g}) "
                f"rel={rel:.4f} tol={tol:.4f} "
                f"{'pass' if ok else 'FAIL'}")
    write_csv(out / "validate.csv",
              ["scheme", "bin_id", "closed_form", "mc_rate", "mc_se",
               "rel_error", "tolerance", "status"], rows)

    # training-statistics identity xi + sigma = g over every link
    if run.schemes:
        entry = run.schemes[0]
        cfg, _ = _scheme_rate(cfg_file, layout, reps[0], entry,
                              cfg_file.system, cfg_file.family)
        scn = _mc_scenario(cfg_file, layout, reps[0], cfg, cfg_file.system,
                           cfg_file.family)
        resid = stats_for(scn).identity_residual(
            scn.alpha_ul * scn.Q * scn.S)
        ok = resid < 1e-9
        failures += not ok
        report.append(f"xi+sigma=g identity: max residual {resid:.3g} "
                      f"{'pass' if ok else 'FAIL'}")

    # constant-partial-trace convergence for the first clustered scheme
    lemma_entry = next((e for e in run.schemes
                        if int(e["C"]) > 1 and int(e["J"]) >= 1), None)
    if lemma_entry is not None:
        cfg, _ = _scheme_rate(cfg_file, layout, reps[0], lemma_entry,
                              cfg_file.system, cfg_file.family)
        scn = _mc_scenario(cfg_file, layout, reps[0], cfg, cfg_file.system,
                           cfg_file.family)
        lemma_rows = []
        for n in run.n_values:
            devs = []
            for r in range(run.lemma_realizations):
                prec = sample_precoder(scn, cfg, N=n, seed=run.seed + 1000 * r)
                traces = partial_trace_profile(prec, scn)
                devs.append(np.abs(traces - 1.0 / scn.C).max())
            lemma_rows.append([n, float(np.mean(devs)), float(np.max(devs))])
            report.append(f"partial trace N={n}: mean max-dev "
                          f"{np.mean(devs):.5f}")
        write_csv(out / "lemma_partial_trace.csv",
                  ["N", "mean_max_dev", "max_max_dev"], lemma_rows)

    report.append(f"{failures} failure(s)")
    path = out / "report.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(report) + "\n")
    print("\n".join(report))
    print(f"wrote {path}")
    return 2 if failures else 0


def cmd_schedule(cfg_file, out, args):
    layout = cfg_file.build_layout()
    reps = cfg_file.bin_representatives(layout)
    run = cfg_file.run
    opts = [optimize_bin(layout, cfg_file.pathloss, cfg_file.system, rep,
                         cfg_file.family, bin_id=k)
            for k, rep in enumerate(reps)]
    r_star = np.array([o.net_rate for o in opts])
    plan = schedule(r_star, run.utility, alpha=run.alpha)
    rows = []
    user_col = None
    if cfg_file.system.U is not None:
        pops = [cfg_file.system.U * _bin_multiplicity(layout, o) for o in opts]
        user_col = per_user_rates(plan, pops)
    for k, o in enumerate(opts):
        row = [k, *_coord_row(layout, o.representative), o.config.label,
               o.net_rate, plan.rho[k], plan.bin_rates[k]]
        row.append(user_col[k] if user_col is not None else None)
        rows.append(row)
    header = ["bin_id", *_coord_header(layout), "scheme", "net_rate", "rho",
              "bin_rate", "user_rate"]
    path = write_csv(out / "schedule.csv", header, rows)
    tput = system_throughput(plan, cfg_file.system.bandwidth_hz)
    print(f"utility={plan.utility_kind} value={plan.utility_value:.6g} "
          f"throughput={tput / 1e6:.3f} Mbit/s per cluster")
    print(f"wrote {path}")
    return 0


def _bin_multiplicity(layout, opt):
    return 2 if layout.dimension == 1 else 3


_COMMANDS = {
    "bin-rates": cmd_bin_rates,
    "optimize-map": cmd_optimize_map,
    "throughput-sweep": cmd_throughput_sweep,
    "validate": cmd_validate,
    "schedule": cmd_schedule,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="netmimo",
        description="Network-MIMO TDD architecture evaluation and optimization")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment YAML file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg_file = load_config(args.config)
        if args.seed is not None:
            cfg_file.run.seed = args.seed
        if args.trials is not None:
            cfg_file.run.trials = args.trials
        if args.threads is not None:
            cfg_file.run.threads = args.threads
        out = Path(args.out if args.out is not None else cfg_file.run.out)
        return _COMMANDS[args.command](cfg_file, out, args)
    except (ConfigurationError, DomainError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, SingularRealizationError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except NetMimoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
