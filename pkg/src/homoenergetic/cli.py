"""Command-line interface.

    homoenergetic <subcommand> [key=value ...] [--config FILE] [--outdir DIR] [--threads N]

Each run writes results.csv, summary.json and manifest.json (plus figures)
into the output directory. ``--config manifest.json`` reruns a recorded run.
"""
import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__, dsmc, entropy, flows, moments, selfsim, stability
from .config import SUBCOMMANDS, parse_config
from .errors import ConfigError, HomoenergeticError, NumericalError

COLUMNS_HELP = """\
results.csv columns by subcommand:
  classify         t, rho, L11..L33 (velocity gradient L(t) = (I + tA)^-1 A)
  kernel-info      cos_theta, angular_part, cdf
  moments          t, M11, M22, M33, M12, M13, M23, trace
                   (with eigen=true also alpha_bar, N11, N22, N33, N12, N13, N23)
  eigen            index, re, im (all eigenvalues of the moment eigen-operator)
  simulate         t, rho, M11..M23, energy, q1, q2, q3, fourth_cumulant,
                   collisions_this_interval (replica means; *_se columns when replicas > 1)
  selfsim          xi1, xi2, xi3 (pooled self-similar profile samples)
  stability-check  K, b, K_over_b, criterion_value, holds
  entropy          t, clock, N, rho, e, s_per_rho, C_G, C_G_se, C_maxwell, relation_residual
  sweep            K_over_b, K, b, beta_analytic, beta_measured, beta_se

Keys are dotted (flow.K, sim.N, kernel.gamma, ...) or flat aliases (K, N, gamma).
Exit codes: 0 ok, 2 configuration error, 3 numerical failure.
"""


def fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Report:
    """Collects the table, the summary and figure callbacks of one run."""

    def __init__(self, header, rows, summary, figures=()):
        self.header = header
        self.rows = rows
        self.summary = summary
        self.figures = list(figures)  # (file name, callable(path))


# subcommand handlers: cfg -> Report

def do_classify(cfg):
    A = cfg.flow_matrix()
    case = flows.classify_flow(A)
    tc = flows.critical_time(A)
    t_end = cfg["sim.t_end"] if not math.isfinite(tc) else min(cfg["sim.t_end"], 0.99 * tc)
    ts = np.linspace(0.0, t_end, cfg["analysis.n_out"])
    rows = [[t, flows.density(A, t), *flows.evaluate_L(A, t).ravel()] for t in ts]
    header = ["t", "rho"] + [f"L{i}{j}" for i in range(1, 4) for j in range(1, 4)]
    summary = {"case": case.to_dict(), "critical_time": tc if math.isfinite(tc) else None}
    try:
        summary["asymptotic_generator"], summary["clock"] = flows.asymptotic_generator(A)
    except ValueError:
        summary["asymptotic_generator"], summary["clock"] = None, None
    return Report(header, rows, summary)


def do_kernel_info(cfg):
    kernel = cfg.kernel()
    x = np.linspace(-1.0, 1.0, 1025)
    values = kernel(x)
    seg = 0.5 * (values[1:] + values[:-1]) * np.diff(x)
    cdf = np.concatenate([[0.0], np.cumsum(seg)])
    cdf = cdf / cdf[-1] if cdf[-1] > 0 else cdf
    summary = {**kernel.describe(), "b": kernel.b, "lambda0": kernel.lambda0}
    figs = [("kernel.png", lambda p: _plots().plot_kernel(x, values, p))]
    return Report(["cos_theta", "angular_part", "cdf"], zip(x, values, cdf), summary, figs)


def _generator(cfg):
    A = cfg.flow_matrix()
    if not np.any(A):
        return A, np.zeros((3, 3)), "t"
    try:
        L, clock_name = flows.asymptotic_generator(A)
    except ValueError as exc:
        raise ConfigError("flow.name", f"no constant asymptotic generator: {exc}") from None
    return A, L, clock_name


def do_moments(cfg):
    b = cfg.b()
    M0 = np.eye(3) if cfg["analysis.M0"] is None else np.reshape(cfg["analysis.M0"], (3, 3))
    ts = np.linspace(0.0, cfg["sim.t_end"], cfg["analysis.n_out"])
    A = cfg.flow_matrix()
    summary = {"b": b}
    if cfg["sim.mode"] == "rescaled":
        _, L, clock_name = _generator(cfg)
        eig = moments.leading_eigenpair(L, b)
        alpha = eig.alpha_bar if cfg["sim.alpha"] is None else cfg["sim.alpha"]
        traj = moments.integrate_moments(M0, b, ts, Q=L + alpha * np.eye(3))
        summary.update(alpha=alpha, clock=clock_name)
    else:
        if np.any(A):
            flows.check_admissible(A, t_max=cfg["sim.t_end"])
            traj = moments.integrate_moments(M0, b, ts, flow=A, rho0=cfg["sim.rho0"])
        else:
            traj = moments.integrate_moments(M0, b, ts, Q=np.zeros((3, 3)), rho0=cfg["sim.rho0"])
    tr = traj.trace
    header = ["t", *moments.SYM_LABELS, "trace"]
    rows = [[t, *moments.sym_to_vec(M), s] for t, M, s in zip(traj.t, traj.M, tr)]
    if cfg["analysis.eigen"]:
        _, L, _ = _generator(cfg)
        eig = moments.leading_eigenpair(L, b)
        extra = [eig.alpha_bar, *moments.sym_to_vec(eig.N_bar)]
        header += ["alpha_bar"] + ["N" + lab[1:] for lab in moments.SYM_LABELS]
        rows = [r + extra for r in rows]
        summary["eigen"] = eig.to_dict()
        summary["cosine_to_N_bar"] = selfsim.cosine_similarity(traj.M[-1], eig.N_bar)
    half = traj.t >= traj.t[-1] / 2
    if np.all(tr > 0) and half.sum() >= 3:
        summary["trace_growth_rate"] = selfsim.fit_growth(traj.t[half], tr[half])[0]
    summary["M_final"] = traj.M[-1]
    figs = [("moments.png", lambda p: _plots().plot_moments(traj.t, traj.M, p))]
    return Report(header, rows, summary, figs)


def do_eigen(cfg):
    b = cfg.b()
    A, L, clock_name = _generator(cfg)
    eig = moments.leading_eigenpair(L, b)
    summary = {**eig.to_dict(), "b": b, "L": L, "clock": clock_name,
               "residual": moments.eigen_residual(eig, L, b)}
    name = cfg.flow_name
    K = cfg["flow.K"]
    if name == "simple_shear":
        lam = moments.simple_shear_lambda1(K, b)
        summary["analytic"] = {"lambda1": lam, "beta": b * (lam - 1)}
        T = K / b if cfg["analysis.T"] is None else cfg["analysis.T"]
        summary["heat_flux"] = moments.heat_flux_rates(T).to_dict()
    elif name == "planar_shear":
        summary["analytic"] = {"beta": moments.planar_shear_beta(K, b)}
    ev = eig.eigenvalues
    rows = [[i, float(np.real(z)), float(np.imag(z))] for i, z in enumerate(ev)]
    return Report(["index", "re", "im"], rows, summary)


def _sim_table(res):
    mean, se = res.mean, res.se
    header = list(dsmc.DIAG_COLUMNS)
    rows = [list(r) for r in mean]
    if res.values.shape[0] > 1:
        header += [c + "_se" for c in dsmc.DIAG_COLUMNS[1:]]
        rows = [r + list(s[1:]) for r, s in zip(rows, se)]
    k = dsmc.DIAG_COLUMNS.index("collisions_this_interval")
    for r in rows:
        r[k] = int(round(r[k]))
    return header, rows


def do_simulate(cfg):
    sim = cfg.sim_config()
    res = dsmc.run_replicas(sim)
    header, rows = _sim_table(res)
    energy = res.column("energy").mean(axis=0)
    t = res.times
    summary = {
        "sim": sim.to_dict(),
        "M_final": res.moments()[0][-1],
        "energy_final": energy[-1],
        "fourth_cumulant_final": res.column("fourth_cumulant").mean(axis=0)[-1],
        "collisions_total": int(res.column("collisions_this_interval").sum()),
        "max_momentum_error": max(e.max_momentum_error for e in res.ensembles),
        "max_energy_error": max(e.max_energy_error for e in res.ensembles),
    }
    half = t >= t[-1] / 2
    if half.sum() >= 3 and np.all(energy > 0):
        c = t if sim.mode == "rescaled" or not np.any(sim.A) else selfsim.clock(sim.A, t)
        summary["growth_rate"], summary["growth_rate_se"] = selfsim.fit_growth(c[half], energy[half])
    e_se = res.se[:, dsmc.DIAG_COLUMNS.index("energy")] if res.values.shape[0] > 1 else None
    cum = res.column("fourth_cumulant").mean(axis=0)
    figs = [("diagnostics.png", lambda p: _plots().plot_diagnostics(t, energy, cum, p, e_se)),
            ("moments.png", lambda p: _plots().plot_moments(t, res.moments()[0], p))]
    return Report(header, rows, summary, figs)


def _selfsim_config(cfg):
    v = cfg.values
    return selfsim.SelfSimConfig(N=v["sim.N"], seed=v["sim.seed"], replicas=v["sim.replicas"],
                                 t_max=v["analysis.t_max"], window=v["analysis.window"], dt=v["sim.dt"],
                                 threads=v["sim.threads"])


def _beta_config(cfg, seed_offset=1):
    v = cfg.values
    return selfsim.BetaConfig(N=v["sim.N"], seed=v["sim.seed"] + seed_offset, replicas=v["sim.replicas"],
                              threads=v["sim.threads"])


def do_selfsim(cfg):
    kernel = cfg.kernel()
    A = cfg.flow_matrix()
    run = selfsim.run_to_steady_state(A, kernel, _selfsim_config(cfg))
    summary = run.summary()
    if cfg["analysis.measure_beta"] and np.any(A):
        beta, se, _ = selfsim.measure_beta_physical(A, kernel, _beta_config(cfg), return_se=True)
        run.beta_measured = beta
        summary.update(beta_measured=beta, beta_measured_se=se)
    tr = run.history_trace.mean(axis=0)
    figs = [("profile.png", lambda p: _plots().plot_profile(run.profile_samples, p)),
            ("trace.png", lambda p: _plots().plot_diagnostics(run.history_t, tr, np.zeros_like(tr), p))]
    return Report(["xi1", "xi2", "xi3"], run.profile_samples, summary, figs)


def do_stability(cfg):
    kernel = cfg.kernel()
    K = cfg["flow.K"]
    b = cfg.b()
    verdict = stability.criterion_search(kernel, K, b, level=cfg["analysis.level"])
    W0 = stability.build_W0(K, b)
    summary = {**verdict.to_dict(), "K_over_b": K / b, "W0": W0.coefficients,
               "W0_positive_definite": W0.positive_definite,
               "phi_residual_e1": stability.phi_residual(kernel, K, b)}
    row = [K, b, K / b, verdict.criterion_value, verdict.holds]
    return Report(["K", "b", "K_over_b", "criterion_value", "holds"], [row], summary)


def _load_samples(path):
    try:
        x = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError("analysis.samples", f"cannot read {path}: {exc}") from None
    if x.shape[1] != 3:
        raise ConfigError("analysis.samples", "need three columns")
    return x


def do_entropy(cfg):
    header = ["t", "clock", "N", "rho", "e", "s_per_rho", "C_G", "C_G_se", "C_maxwell", "relation_residual"]
    if cfg["analysis.samples"]:
        x = _load_samples(cfg["analysis.samples"])
        C, se = entropy.C_G_with_se(x)
        h = entropy.differential_entropy(x)
        e = float(np.mean(np.einsum("ij,ij->i", x, x)))
        summary = {"N": len(x), "entropy": h, "e": e, "C_G": C, "C_G_se": se,
                   "C_maxwell": entropy.C_MAXWELL, "C_M_literal": entropy.C_M,
                   "tail_index": entropy.hill_tail_index(x), "k": entropy.K_NEIGHBOURS}
        row = [None, None, len(x), 1.0, e, h, C, se, entropy.C_MAXWELL, 0.0]
        return Report(header, [row], summary)
    A = cfg.flow_matrix()
    run = selfsim.run_to_steady_state(A, cfg.kernel(), _selfsim_config(cfg))
    rep = entropy.entropy_relation_report(run, A, cfg["analysis.t"])
    d = rep.to_dict()
    summary = {**d, "estimator": "Kozachenko-Leonenko", "alpha_bar": run.alpha_bar}
    row = [rep.t, rep.clock, rep.N, rep.rho, rep.e, rep.s_per_rho, rep.C_G, rep.C_G_se,
           rep.C_maxwell, rep.relation_residual]
    return Report(header, [row], summary)


def do_sweep(cfg):
    kernel = cfg.kernel()
    b = cfg.b()
    rows = []
    for kb in cfg["analysis.K_over_b"]:
        K = kb * b
        A = cfg.flow_matrix(K=K)
        if cfg.flow_name == "simple_shear":
            analytic = b * (moments.simple_shear_lambda1(K, b) - 1)
        else:
            analytic = moments.planar_shear_beta(K, b)
        beta, se, _ = selfsim.measure_beta_physical(A, kernel, _beta_config(cfg, 0), return_se=True)
        rows.append([kb, K, b, analytic, beta, se])
    arr = np.array(rows, dtype=float)
    summary = {"flow": cfg.flow_name, "b": b, "max_abs_error": float(np.max(np.abs(arr[:, 4] - arr[:, 3])))}
    figs = [("sweep.png", lambda p: _plots().plot_sweep(arr[:, 0], arr[:, 3], arr[:, 4], arr[:, 5], p))]
    return Report(["K_over_b", "K", "b", "beta_analytic", "beta_measured", "beta_se"], rows, summary, figs)


HANDLERS = {
    "classify": do_classify,
    "kernel-info": do_kernel_info,
    "moments": do_moments,
    "eigen": do_eigen,
    "simulate": do_simulate,
    "selfsim": do_selfsim,
    "stability-check": do_stability,
    "entropy": do_entropy,
    "sweep": do_sweep,
}


def _plots():
    from . import plotting
    return plotting


def build_parser():
    p = argparse.ArgumentParser(
        prog="homoenergetic", description="Homoenergetic Boltzmann flows: moments, particles, self-similarity.",
        epilog=COLUMNS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("params", nargs="*", metavar="SUBCOMMAND | key=value",
                   help=f"one of {', '.join(SUBCOMMANDS)}, then settings such as K=0.06 N=100000")
    p.add_argument("--config", metavar="FILE", help="JSON config or a manifest.json from an earlier run")
    p.add_argument("--outdir", help="output directory (default: out)")
    p.add_argument("--threads", type=int, help="worker threads for replicas (default 1)")
    p.add_argument("--no-plots", action="store_true", help="skip figures")
    return p


def run_cli(args):
    tokens = list(args.params)
    if args.outdir is not None:
        tokens.append(f"output.outdir={args.outdir}")
    if args.threads is not None:
        tokens.append(f"sim.threads={args.threads}")
    if args.no_plots:
        tokens.append("output.plots=false")
    cfg = parse_config(tokens, path=args.config)
    outdir = cfg["output.outdir"]
    os.makedirs(outdir, exist_ok=True)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    report = HANDLERS[cfg.subcommand](cfg)
    elapsed = time.perf_counter() - t0

    written = []
    path = os.path.join(outdir, "results.csv")
    write_csv(path, report.header, report.rows)
    written.append(path)
    path = os.path.join(outdir, "summary.json")
    write_json(path, report.summary)
    written.append(path)
    if cfg["output.plots"]:
        for name, draw in report.figures:
            path = os.path.join(outdir, name)
            draw(path)
            written.append(path)
    manifest = {
        "config": cfg.to_dict(),
        "seed": cfg["sim.seed"],
        "version": __version__,
        "command": ["homoenergetic", *sys.argv[1:]] if sys.argv else None,
        "started_utc": started.isoformat(),
        "wall_clock_seconds": elapsed,
        "outputs": {os.path.basename(p): sha256(p) for p in written},
    }
    write_json(os.path.join(outdir, "manifest.json"), manifest)
    json.dump(jsonable(report.summary), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_intermixed_args(argv)
    if not args.params and args.config is None:
        parser.print_help()
        return 2
    try:
        return run_cli(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except HomoenergeticError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
