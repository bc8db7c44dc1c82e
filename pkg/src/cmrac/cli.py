"""Command-line entry point: ``cmrac {simulate,montecarlo,verify}``."""

import argparse
from dataclasses import replace
import os
import sys

import numpy as np

from . import excitation, harness
from .sim import envelope, run_episode, theoretical_rate

ENVELOPE_SLACK = 1e-3
LYAPUNOV_RTOL = 1e-6
EXTRACTION_TOL = 1e-4


def _cmd_simulate(args):
    cfg = harness.load_config(args.config)
    sim = cfg.sim if args.law is None else replace(cfg.sim, law=args.law)
    traj = run_episode(sim, cfg.model, cfg.ref)
    os.makedirs(args.out, exist_ok=True)
    harness.write_trajectory(traj, os.path.join(args.out, "trajectory.csv"))
    harness.write_summary(os.path.join(args.out, "summary.txt"), cfg)
    print(f"t_q = {traj.t_q}")
    print(f"final ||chi|| = {traj.chi_norm[-1]:.6g}")
    print(f"wrote {args.out}")
    return 0


def _cmd_montecarlo(args):
    cfg = harness.load_config(args.config)
    mc = cfg.monte_carlo
    mc = replace(
        mc,
        n_samples=mc.n_samples if args.samples is None else args.samples,
        seed=mc.seed if args.seed is None else args.seed,
    )
    cfg = replace(cfg, monte_carlo=mc)
    results = harness.run_monte_carlo(cfg, workers=args.workers)
    flagged = {}
    for r in results:
        if not r.within_bound:
            _, traj = harness.evaluate_sample(
                cfg, r.index, r.level, r.estimate_error, r.x0, keep_trajectory=True
            )
            flagged[r.index] = traj
    harness.write_results(results, args.out, cfg, flagged)
    for line in harness.summary_lines(cfg, results):
        print(line)
    return 0


def verify(cfg, log=print):
    """Run the invariant checks on one configured episode per law; returns failure count."""
    model, ref = cfg.model, cfg.ref
    _, kappa, alpha = theoretical_rate(ref.Q, ref.P, model.b, model.k_p)
    failures = 0

    def check(name, ok, detail):
        nonlocal failures
        failures += not ok
        log(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")

    for law in ("combined", "gradient"):
        traj = run_episode(replace(cfg.sim, law=law), model, ref)
        dV = np.diff(traj.V) - LYAPUNOV_RTOL * np.maximum(1.0, traj.V[:-1])
        check(f"lyapunov[{law}]", bool(np.all(dV <= 0)), f"max increase {np.max(np.diff(traj.V)):.3e}")
        if law != "combined":
            continue
        check("memory completes", traj.t_q is not None, f"t_q = {traj.t_q}")
        if traj.t_q is None:
            continue
        err = np.max(np.abs(traj.Y_m - model.W_T))
        check("extraction", err <= EXTRACTION_TOL, f"max |Y_m - W^T| = {err:.3e}")
        try:
            ext = excitation.extract_params(traj.Y_m, model.n, model.p)
            th_err = float(np.max(np.abs(ext.theta_hat - model.theta), initial=0.0))
            check("theta round-trip", th_err <= EXTRACTION_TOL, f"max error {th_err:.3e}")
        except excitation.DegenerateEffectiveness as exc:
            check("theta round-trip", False, str(exc))
        after = traj.t > traj.t_q
        ratio = np.max(traj.chi_norm[after] / envelope(traj, kappa, alpha)[after], initial=0.0)
        check("envelope", ratio <= 1 + ENVELOPE_SLACK, f"max ||chi|| / bound = {ratio:.3e}")
    return failures


def _cmd_verify(args):
    failures = verify(harness.load_config(args.config))
    return 1 if failures else 0


def build_parser():
    parser = argparse.ArgumentParser(prog="cmrac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one episode and write trajectory.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--law", choices=("gradient", "combined"))
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("montecarlo", help="randomized decay-time study")
    p.add_argument("--config", required=True)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_montecarlo)

    p = sub.add_parser("verify", help="check Lyapunov decrease, extraction and the decay envelope")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
