"""Command-line entry point ``treewave``.

Every subcommand prints JSON (or CSV with ``--csv`` where tabular) and writes
a run manifest under ``--runs-dir``. Exit codes: 0 success, 1 a check or
certificate failed, 2 usage error.
"""

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field

import numpy as np
import sympy
from sympy.parsing.sympy_parser import (
    convert_xor,
    implicit_multiplication_application,
    parse_expr,
    standard_transformations,
)

from treewave import __version__

SEED_ENV = "TREEWAVE_SEED"
_TRANSFORMS = standard_transformations + (implicit_multiplication_application, convert_xor)
_ALLOWED = re.compile(r"^[0-9a-z().+\-*/^ ]+$")
_NAMES = {"sqrt", "d", "pi"}


class UsageError(Exception):
    pass


def parse_number(text: str, d: int = None) -> float:
    """Evaluate a numeric or symbolic value such as ``-2sqrt2`` or ``2sqrt(d-1)``."""
    t = str(text).strip().lower()
    try:
        return float(t)
    except ValueError:
        pass
    if not _ALLOWED.match(t) or set(re.findall(r"[a-z]+", t)) - _NAMES:
        raise UsageError(f"cannot parse value {text!r}")
    local = {"d": sympy.Integer(d)} if d is not None else {}
    try:
        expr = parse_expr(t.replace("sqrt", "sqrt "), transformations=_TRANSFORMS, local_dict=local)
        return float(sympy.N(expr, 30))
    except Exception as exc:
        raise UsageError(f"cannot parse value {text!r}: {exc}") from None


@dataclass
class RunManifest:
    command: str
    parameters: dict
    seed: int
    artifact_version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    outputs: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("command", "parameters", "seed", "artifact_version", "timestamp", "outputs")}

    def write(self, runs_dir: str) -> str:
        os.makedirs(runs_dir, exist_ok=True)
        body = dumps(self.as_dict())
        tag = hashlib.sha256(body.encode()).hexdigest()[:10]
        stamp = self.timestamp.replace(":", "").replace("-", "")[:15]
        path = os.path.join(runs_dir, f"{self.command}-{stamp}-{tag}.json")
        with open(path, "w") as fh:
            fh.write(body + "\n")
        return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "as_dict"):
        return _plain(obj.as_dict())
    return obj


def dumps(obj) -> str:
    # float repr is the shortest round-trip form (up to 17 significant digits)
    return json.dumps(_plain(obj), indent=2, sort_keys=False)


# ---------------------------------------------------------------- commands

def cmd_wave(args):
    from treewave.wavefield import coupling_constants, covariance_sequence, monte_carlo_covariances
    d = args.d
    lam = parse_number(args.lam, d)
    seq = covariance_sequence(d, lam, args.K)
    out = {"d": d, "lambda": lam, "sigma": seq.values, "residuals": seq.residuals(),
           "coupling": coupling_constants(d, lam).__dict__}
    if args.trials:
        out["monte_carlo"] = monte_carlo_covariances(d, lam, args.radius, args.trials, args.seed,
                                                     workers=args.workers)
    return out, 0


def cmd_factor(args):
    from treewave.linfactor import alpha_coefficients, convergence_sweep, factor_covariance
    from treewave.wavefield import covariance_sequence
    d = args.d
    lam = parse_number(args.lam, d)
    if args.sweep:
        return {"sweep": convergence_sweep(d, lam, range(1, args.sweep + 1), args.lambda_offset)}, 0
    c = alpha_coefficients(d, lam, args.rho, args.N, args.lambda_offset)
    sigma = covariance_sequence(d, c.eigenvalue, 3).values
    return {"d": d, "lambda": c.eigenvalue, "rho": c.rho, "N": c.truncation,
            "alpha_preview": c.preview(), "norm_sq": c.norm_sq, "delta_norm_sq": c.delta_norm_sq,
            "covariance": [factor_covariance(c, k) for k in range(4)], "sigma": sigma}, 0


def cmd_percolation(args):
    from treewave.percolation import certify_finite_components, percolation_density
    c = certify_finite_components(parse_number(args.tau), args.declared_error)
    out = c.as_dict()
    out["density"] = percolation_density(c.tau)
    return out, 0 if c.valid else 1


def cmd_bound(args):
    from treewave.percolation import certify_finite_components
    from treewave.quadrature import DESK_N, FULL_N, final_bound
    tau = parse_number(args.tau)
    N = args.N or (FULL_N if args.full else DESK_N)
    cert = None if args.skip_certificate else certify_finite_components(tau)
    if cert is not None and not cert.valid:
        return {"certificate": cert.as_dict(), "error": "finite-cluster certificate failed"}, 1
    r = final_bound(tau, N=N, R=args.R, certificate=cert, skip_certificate=args.skip_certificate,
                    workdir=args.workdir)
    if cert is not None:
        r["certificate"] = cert.as_dict()
    return r, 0


def cmd_simulate(args):
    from treewave.indepset import ComponentParams, simulate_components
    d = args.d
    params = ComponentParams(d, parse_number(args.lam, d), parse_number(args.tau), args.max_size)
    r = simulate_components(params, args.trials, args.seed, args.workers)
    return r, 0


def cmd_closed_form(args):
    from treewave.indepset import (LAM3, bipartite_theorem_constant, first_approach_size,
                                   local_max_correlation, tau_zero_bound)
    return {"first_approach_correlation": local_max_correlation(3, LAM3),
            "first_approach_size": first_approach_size(3, LAM3),
            "bipartite_constant": bipartite_theorem_constant(),
            "tau_zero_bound": tau_zero_bound()}, 0


def cmd_reproduce(args):
    from treewave.reproduce import run_profile
    rows = run_profile(args.profile, args.seed, args.workers, args.trials, args.workdir,
                       report=lambda line: print(line, file=sys.stderr))
    failed = [r for r in rows if not r.passed]
    return {"profile": args.profile, "checks": [r.as_dict() for r in rows],
            "passed": len(rows) - len(failed), "failed": len(failed)}, 1 if failed else 0


def _csv_rows(command, out):
    if command == "simulate":
        return ["size", "count"], sorted(out["size_histogram"].items())
    if command == "wave":
        return ["k", "sigma"], list(enumerate(out["sigma"]))
    if command == "factor" and "sweep" in out:
        return (["j", "rho", "N", "delta_norm_sq", "max_cov_error"],
                [[r["j"], r["rho"], r["N"], r["delta_norm_sq"], r["max_cov_error"]] for r in out["sweep"]])
    if command == "reproduce":
        return (["criterion", "name", "passed", "value", "target"],
                [[c["criterion"], c["name"], c["passed"], c["value"], c["target"]] for c in out["checks"]])
    raise UsageError(f"--csv is not supported for {command}")


def build_parser() -> argparse.ArgumentParser:
    env_seed = os.environ.get(SEED_ENV)
    try:
        default_seed = int(env_seed) if env_seed is not None else 0
    except ValueError:
        default_seed = 0

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default_seed,
                        help=f"RNG seed (default from ${SEED_ENV}, else 0)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--runs-dir", default="runs", help="where run manifests are written")
    common.add_argument("--no-manifest", action="store_true")
    common.add_argument("--csv", action="store_true", help="CSV output for tabular results")

    p = argparse.ArgumentParser(prog="treewave", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("wave", parents=[common], help="covariances and coupling constants")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--lam", default="-2sqrt(d-1)")
    s.add_argument("--K", type=int, default=10)
    s.add_argument("--radius", type=int, default=3)
    s.add_argument("--trials", type=int, default=0, help="Monte Carlo balls (0 = skip)")
    s.set_defaults(func=cmd_wave)

    s = sub.add_parser("factor", parents=[common], help="linear factor coefficients")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--lam", default="-2sqrt(d-1)")
    s.add_argument("--rho", type=float, default=0.999)
    s.add_argument("--N", type=int, default=None)
    s.add_argument("--lambda-offset", type=float, default=1e-6)
    s.add_argument("--sweep", type=int, default=0, help="run rho = 1 - 2^-j for j = 1..SWEEP")
    s.set_defaults(func=cmd_factor)

    s = sub.add_parser("percolation", parents=[common], help="finite-cluster certificate")
    s.add_argument("--tau", default="0.086")
    s.add_argument("--declared-error", type=float, default=1e-7)
    s.set_defaults(func=cmd_percolation)

    s = sub.add_parser("bound", parents=[common], help="quadrature lower bound")
    s.add_argument("--tau", default="0.086")
    s.add_argument("--N", type=int, default=None)
    s.add_argument("--R", type=float, default=7.0)
    s.add_argument("--full", action="store_true", help="N = 20000")
    s.add_argument("--skip-certificate", action="store_true")
    s.add_argument("--workdir", default=None, help="directory for disk-backed grids")
    s.set_defaults(func=cmd_bound)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo second approach")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--lam", default="-2sqrt(d-1)")
    s.add_argument("--tau", default="0.12")
    s.add_argument("--max-size", type=int, default=200)
    s.add_argument("--trials", type=int, default=1_000_000)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("closed-form", parents=[common], help="analytic constants")
    s.set_defaults(func=cmd_closed_form)

    s = sub.add_parser("reproduce", parents=[common], help="run every reproduction check")
    s.add_argument("profile", choices=["desk", "full"])
    s.add_argument("--trials", type=int, default=10_000_000)
    s.add_argument("--workdir", default=None)
    s.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        out, code = args.func(args)
        if args.csv:
            header, rows = _csv_rows(args.command, out)
            w = csv.writer(sys.stdout)
            w.writerow(header)
            w.writerows(rows)
        else:
            print(dumps(out))
    except (UsageError, ValueError) as exc:
        print(f"treewave {args.command}: {exc}", file=sys.stderr)
        return 2
    if not args.no_manifest:
        params = {k: v for k, v in vars(args).items() if k not in ("func", "seed", "runs_dir", "no_manifest")}
        path = RunManifest(args.command, params, args.seed, outputs=_plain(out)).write(args.runs_dir)
        print(f"manifest: {path}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
