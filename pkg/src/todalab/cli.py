"""Batch command-line front-end.

Subcommands: lie, fold, seiberg, sample, gmc, estimate, walg, weylcheck.
Stochastic commands (sample, gmc, estimate, weylcheck) require an explicit
--seed; none is ever auto-generated. Every report embeds the config hash,
seed, package versions, and the output-convention block. Exit codes:
0 success, 2 validation error, 3 numerical budget exceeded, 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from . import __version__
from . import chaos, correlator, fields, rootdata, surface as surf, walg

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

CONVENTIONS = {
    "chaos_normalization": "lattice-Wick",
    "partition_normalization": "omitted",
}


class ValidationError(Exception):
    pass


def _config_hash(payload: dict) -> str:
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
    return digest.hexdigest()[:12]


def _report(command: str, args_payload: dict, result: dict, seed=None) -> dict:
    return {
        "command": command,
        "config_hash": _config_hash(args_payload),
        "seed": seed,
        "versions": {"todalab": __version__, "numpy": np.__version__},
        "conventions": dict(CONVENTIONS),
        "result": result,
    }


def _emit(doc, out_path, fmt="json"):
    if fmt == "json":
        text = json.dumps(doc, indent=1, sort_keys=True)
    else:
        text = doc  # pre-rendered CSV
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _parse_tau(rs, tau_arg: str) -> rootdata.OuterAut:
    auts = rootdata.outer_automorphisms(rs)
    if tau_arg in (None, "identity", "id"):
        return auts[0]
    if tau_arg == "swap":
        nontrivial = [a for a in auts if a.order == 2]
        if not nontrivial:
            raise ValidationError(f"{rs.lie_type} has no order-2 diagram symmetry")
        return nontrivial[0]
    if tau_arg.startswith("perm:"):
        perm = tuple(int(x) for x in tau_arg[5:].split(","))
        for a in auts:
            if a.perm == perm:
                return a
        raise ValidationError(f"{perm} is not a diagram symmetry of {rs.lie_type}")
    raise ValidationError(f"cannot parse tau {tau_arg!r}")


def _load_spec(path) -> correlator.CorrelatorSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise OSError(f"cannot read spec {path}: {exc}") from exc
    return correlator.spec_from_dict(doc)


def cmd_lie(args) -> int:
    rs = rootdata.build_root_system(rootdata.LieType.parse(args.type))
    doc = rootdata.root_system_to_dict(rs)
    _emit(_report("lie", {"type": args.type}, doc), args.output)
    return EXIT_OK


def cmd_fold(args) -> int:
    rs = rootdata.build_root_system(rootdata.LieType.parse(args.type))
    tau = _parse_tau(rs, args.tau)
    fd = rootdata.fold(rs, tau)
    doc = rootdata.folding_to_dict(fd)
    kappa = fd.kappa_sq
    kappa_txt = str(kappa.numerator) if kappa.denominator == 1 else str(kappa)
    line = f"folded={fd.folded_type} d_N={fd.d_N} kappa_sq={kappa_txt}"
    _emit(_report("fold", {"type": args.type, "tau": args.tau},
                  {"table_row": line, **doc}), args.output)
    return EXIT_OK


def cmd_seiberg(args) -> int:
    spec = _load_spec(args.spec)
    report = correlator.seiberg_check(spec)
    doc = _report("seiberg", {"spec": args.spec}, report.to_dict())
    _emit(doc, args.output)
    return EXIT_OK if report.verdict else EXIT_VALIDATION


def _ensemble_from_args(args):
    s = surf.load_surface(args.surface)
    rs = rootdata.build_root_system(rootdata.LieType.parse(args.type))
    tau = _parse_tau(rs, args.tau)
    fd = rootdata.fold(rs, tau)
    return s, rs, fd, fields.make_ensemble(s, rs, fd, args.seed)


def cmd_sample(args) -> int:
    _, rs, _, ens = _ensemble_from_args(args)
    kind = fields.FieldKind(args.kind)
    X = fields.sample(ens, kind, args.n)
    if args.dump:
        fields.dump_samples(args.dump, X, args.seed)
    result = {
        "n_samples": args.n,
        "kind": args.kind,
        "n_vertices": int(X.shape[1]),
        "rank": int(X.shape[2]),
        "sample_mean_max_abs": float(np.abs(X.mean(axis=0)).max()),
        "dump": args.dump,
    }
    payload = {"surface": args.surface, "type": args.type, "kind": args.kind,
               "n": args.n, "tau": args.tau}
    _emit(_report("sample", payload, result, seed=args.seed), args.output)
    return EXIT_OK


def cmd_gmc(args) -> int:
    s, rs, fd, ens = _ensemble_from_args(args)
    kind = fields.FieldKind(args.kind)
    u = args.gamma * rs.roots[args.direction]
    region = chaos.Region(args.region)
    mode = chaos.Mode(args.mode)
    if region == chaos.Region.BULK:
        spec = chaos.bulk_spec(ens, u, mode)
    else:
        spec = chaos.boundary_spec(ens, u, mode)
    p_grid = [float(p) for p in args.p_grid.split(",")]
    rep = chaos.moment_scan(ens, kind, spec, p_grid, args.n)
    payload = {"surface": args.surface, "type": args.type, "direction": args.direction,
               "gamma": args.gamma, "region": args.region, "mode": args.mode,
               "n": args.n, "p_grid": args.p_grid, "tau": args.tau}
    if args.format == "csv":
        _emit(rep.to_csv(), args.output, fmt="csv")
    else:
        rows = [{"p": p, "estimate": e, "stderr": se, "verdict": v, "mesh_level": lv}
                for p, e, se, v, lv in rep.rows]
        _emit(_report("gmc", payload, {"rows": rows,
                                       "predicted_threshold": rep.predicted_threshold},
                      seed=args.seed), args.output)
    return EXIT_OK


def cmd_estimate(args) -> int:
    spec = _load_spec(args.spec)
    est = correlator.estimate_correlator(
        spec, n_samples=args.n, seed=args.seed, rel_tol=args.rel_tol,
        divergence_override=args.override,
        zero_mode_method="rank1_gamma" if args.rank1_gamma else "quadrature")
    payload = {"spec": args.spec, "n": args.n, "rel_tol": args.rel_tol,
               "workers": args.workers}
    doc = _report("estimate", payload, est.to_dict(), seed=args.seed)
    _emit(doc, args.output)
    if args.trace and not est.diagnostics.get("divergence_flag"):
        # convergence trace: running estimate over a deterministic seed ladder
        lines = ["n_samples,value,stderr"]
        for frac in (0.1, 0.25, 0.5, 1.0):
            m = max(16, int(args.n * frac))
            e = correlator.estimate_correlator(
                spec, n_samples=m, seed=args.seed, rel_tol=args.rel_tol,
                zero_mode_method="rank1_gamma" if args.rank1_gamma else "quadrature")
            lines.append(f"{m},{e.value},{e.stderr}")
        _emit("\n".join(lines) + "\n", args.trace, fmt="csv")
    if est.diagnostics.get("divergence_flag"):
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_walg(args) -> int:
    currents = walg.miura_currents(args.n)
    result = {"n": args.n, "currents": {str(s): c.pretty() for s, c in currents.items()}}
    if args.parity:
        rs = rootdata.build_root_system(rootdata.LieType("A", args.n - 1))
        tau = _parse_tau(rs, "swap")
        corrected, signs = walg.parity_correct(currents, tau)
        result["parity_signs"] = {str(s): v for s, v in signs.items()}
        result["corrected"] = {str(s): c.pretty() for s, c in corrected.items()}
    _emit(_report("walg", {"n": args.n, "parity": args.parity}, result), args.output)
    return EXIT_OK


def cmd_weylcheck(args) -> int:
    s = surf.load_surface(args.surface)
    rs = rootdata.build_root_system(rootdata.LieType.parse(args.type))
    rng = np.random.default_rng(args.seed)
    phi = rng.standard_normal(s.n_vertices)
    rep = correlator.weyl_shift_check(s, rs, args.gamma, phi, seed=args.seed)
    ok = rep["variance_abs_err"] < 1e-10 and rep["shift_max_abs_err"] < 1e-10
    payload = {"surface": args.surface, "type": args.type, "gamma": args.gamma}
    _emit(_report("weylcheck", payload, {**rep, "pass": ok}, seed=args.seed),
          args.output)
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="todalab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_required=False):
        sp.add_argument("-o", "--output", default=None, help="output path (default stdout)")
        sp.add_argument("--workers", type=int, default=1)
        if seed_required:
            sp.add_argument("--seed", type=int, required=True,
                            help="mandatory seed; stochastic commands never self-seed")

    sp = sub.add_parser("lie", help="root-system data")
    sp.add_argument("--type", required=True)
    common(sp)
    sp.set_defaults(func=cmd_lie)

    sp = sub.add_parser("fold", help="diagram-automorphism folding")
    sp.add_argument("--type", required=True)
    sp.add_argument("--tau", default="identity", help="identity | swap | perm:i,j,...")
    common(sp)
    sp.set_defaults(func=cmd_fold)

    sp = sub.add_parser("seiberg", help="existence bounds for a correlator spec")
    sp.add_argument("--spec", required=True)
    common(sp)
    sp.set_defaults(func=cmd_seiberg)

    sp = sub.add_parser("sample", help="draw free-field samples")
    sp.add_argument("--surface", required=True)
    sp.add_argument("--type", required=True)
    sp.add_argument("--tau", default="identity")
    sp.add_argument("--kind", required=True,
                    choices=[k.value for k in fields.FieldKind])
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--dump", default=None, help="binary sample dump path")
    common(sp, seed_required=True)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("gmc", help="chaos-mass moment scan")
    sp.add_argument("--surface", required=True)
    sp.add_argument("--type", required=True)
    sp.add_argument("--tau", default="identity")
    sp.add_argument("--kind", default="neumann",
                    choices=[k.value for k in fields.FieldKind])
    sp.add_argument("--direction", type=int, default=0, help="simple-root index")
    sp.add_argument("--gamma", type=float, required=True)
    sp.add_argument("--region", default="bulk", choices=["bulk", "boundary"])
    sp.add_argument("--mode", default="wick", choices=["raw", "wick"])
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p-grid", default="0.5,1.0,1.5")
    sp.add_argument("--format", default="csv", choices=["csv", "json"])
    common(sp, seed_required=True)
    sp.set_defaults(func=cmd_gmc)

    sp = sub.add_parser("estimate", help="Monte Carlo correlator estimate")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--rel-tol", type=float, default=1e-6)
    sp.add_argument("--override", action="store_true",
                    help="emit divergence diagnostics instead of rejecting")
    sp.add_argument("--rank1-gamma", action="store_true",
                    help="closed-form constant-mode reduction (rank-1 only)")
    sp.add_argument("--trace", default=None,
                    help="write a running-estimate CSV trace to this path")
    common(sp, seed_required=True)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("walg", help="symbolic currents and parity")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--parity", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_walg)

    sp = sub.add_parser("weylcheck", help="exact metric-change identities")
    sp.add_argument("--surface", required=True)
    sp.add_argument("--type", required=True)
    sp.add_argument("--gamma", type=float, required=True)
    common(sp, seed_required=True)
    sp.set_defaults(func=cmd_weylcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeError,) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
