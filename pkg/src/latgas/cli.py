"""Command-line front end.

Every command prints a JSON report (or CSV for zero sets) on stdout with
sorted keys, so equal inputs give byte-identical output.  A run manifest
with the wall time and a digest of the output goes to stderr, or to the file
given by --manifest.

Exit codes: 0 pass, 2 validation error, 3 budget exceeded, 4 property
violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from fractions import Fraction

from . import __version__
from .coverings import CoveringError, certify_non_sliding, perfect_coverings
from .enumeration import (
    BoundaryError,
    BudgetExceeded,
    FugacityMap,
    PoleError,
    Torus,
    anchor_box_window,
    box_window,
    canonical_counts,
    check_commensurate,
    partition_function,
    region_from_json,
)
from .lattice import ModelError, load_model
from .series import rat_str, region_series, stabilization_report

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_VIOLATION = 0, 2, 3, 4


class PropertyViolation(Exception):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


def _default(obj):
    if isinstance(obj, Fraction):
        return rat_str(obj)
    if isinstance(obj, (set, frozenset, tuple)):
        return sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
    try:
        import mpmath
        if isinstance(obj, (mpmath.mpf, mpmath.mpc)):
            return mpmath.nstr(obj, 20)
    except ImportError:  # pragma: no cover
        pass
    return str(obj)


def dumps(report) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=_default) + "\n"


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ModelError(f"not a rational number: {text!r}") from None


def _extents(text: str) -> tuple:
    try:
        ext = tuple(int(t) for t in text.lower().split("x"))
    except ValueError:
        raise ModelError(f"bad extents {text!r}; expected e.g. 6x6") from None
    if not ext or any(n < 1 for n in ext):
        raise ModelError(f"bad extents {text!r}")
    return ext


def _family(model, args):
    return perfect_coverings(model, args.period_bound)


def _load_json_arg(text: str):
    if os.path.exists(text):
        with open(text) as fh:
            return json.load(fh)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"region: not JSON and not a file ({exc.msg})") from None


def _window(model, family, args):
    ext = _extents(args.window)
    if len(ext) != model.dim:
        raise ModelError("window: number of extents does not match dimension")
    nu = args.nu
    mu = args.mu
    if nu is not None and not 1 <= nu <= family.tau:
        raise ModelError(f"nu: must lie in 1..{family.tau}")
    if mu is None:
        # a tiling different from the boundary phase makes the check non-trivial
        mu = next((m for m in range(1, family.tau + 1) if m != nu), 1)
    return anchor_box_window(model, family, mu, ext, nu)


def _region(model, args, family=None):
    if getattr(args, "region", None):
        data = _load_json_arg(args.region)
        if "window" in data and family is None:
            family = _family(model, args)
        return region_from_json(model, data, family)
    if getattr(args, "torus", None):
        return Torus(model.lattice, _extents(args.torus))
    if getattr(args, "box", None):
        return box_window(model.lattice, _extents(args.box))
    if getattr(args, "window", None):
        return _window(model, family or _family(model, args), args)
    raise ModelError("region: give one of --region, --torus, --box, --window")


def _fugacity(args) -> FugacityMap:
    if getattr(args, "fugacity_file", None):
        with open(args.fugacity_file) as fh:
            data = json.load(fh)
        over = {tuple(k): _fraction(str(v)) for k, v in data.get("overrides", [])}
        return FugacityMap(_fraction(str(data.get("z", 1))), over)
    return FugacityMap(_fraction(args.z))


# -- commands -------------------------------------------------------------------

def cmd_coverings(args):
    model = load_model(args.model)
    fam = perfect_coverings(model, args.period_bound)
    return fam.to_json()


def cmd_check_sliding(args):
    model = load_model(args.model)
    fam = perfect_coverings(model, args.period_bound)
    report = certify_non_sliding(model, fam, args.max_particles)
    if not args.verbose:
        report = {k: v for k, v in report.items() if k != "classes"}
    if not report["passed"]:
        raise PropertyViolation("sliding violation", report)
    return report


def cmd_partition(args):
    model = load_model(args.model)
    region = _region(model, args)
    out = {"model": model.name, "region": region.describe(), "volume": region.volume}
    if args.z is None and not args.fugacity_file:
        out["polynomial"] = canonical_counts(model, region).to_json()
        return out
    fug = _fugacity(args)
    if fug.uniform:
        p = canonical_counts(model, region)
        out["polynomial"] = p.to_json()
        out["value"] = rat_str(p.evaluate(fug.z))
    else:
        out["value"] = rat_str(partition_function(model, region, fug))
    out["z"] = rat_str(fug.z)
    return out


def _series_regions(model, args):
    if args.rings:
        if model.dim != 1:
            raise ModelError("--rings needs a one-dimensional model")
        return [Torus(model.lattice, (int(L),)) for L in args.rings.split(",")]
    if args.tori:
        return [Torus(model.lattice, _extents(t)) for t in args.tori.split(",")]
    raise ModelError("series: give --rings or --tori")


def cmd_series(args):
    model = load_model(args.model)
    regions = _series_regions(model, args)
    kind = {"gf": "gaunt_fisher_c", "mayer": "mayer_b"}[args.kind]
    tau = None
    if kind == "gaunt_fisher_c":
        fam = _family(model, args)
        tau = fam.tau
        for r in regions:
            check_commensurate(r, fam)
    K = args.K
    if K is None:
        K = min(canonical_counts(model, r).n_max for r in regions)
    if len(regions) >= 3:
        return stabilization_report(model, regions, kind, K, tau)
    series = [region_series(model, r, kind, K, tau) for r in regions]
    return {"kind": kind, "K": K, "series": [s.to_json() for s in series],
            "stabilization": None}


def cmd_zeros(args):
    from .leeyang import annulus_summary, find_zeros, verify_zero_identities

    model = load_model(args.model)
    region = _region(model, args)
    p = canonical_counts(model, region)
    zs = find_zeros(p.coefficients, dps=args.dps)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(zs.to_csv())
    if args.format == "csv":
        return zs.to_csv()
    out = {"model": model.name, "region": region.describe(),
           "roots": len(zs.zeros), "zero_multiplicity": zs.zero_multiplicity,
           "iterations": zs.iterations, "dps": zs.dps}
    out.update(annulus_summary(zs))
    if isinstance(region, Torus):
        fam = _family(model, args)
        check_commensurate(region, fam)
        ident = verify_zero_identities(p, zs, region.volume, fam.tau, args.K)
        out["identities"] = ident
        if ident["max_residual"] >= args.tol:
            raise PropertyViolation("zero identities violated", out)
    return out


def cmd_gfc_verify(args):
    from .gfc import IncompleteEnumeration, enumerate_gfcs, verify_gfc_identity

    model = load_model(args.model)
    fam = _family(model, args)
    window = _region(model, args, fam)
    if window.nu is None:
        raise ModelError("gfc-verify: the window needs --nu")
    gfcs = enumerate_gfcs(model, fam, window, window.nu)
    rows = []
    ok = True
    for z in args.z:
        try:
            r = verify_gfc_identity(model, fam, window, _fraction(z), args.cutoff, gfcs=gfcs)
        except IncompleteEnumeration as exc:
            raise BudgetExceeded(str(exc)) from None
        ok = ok and r["passed"]
        rows.append({"z": rat_str(r["z"]), "lhs": rat_str(r["lhs"]), "rhs": rat_str(r["rhs"]),
                     "passed": r["passed"]})
    report = {"model": model.name, "window": window.describe(), "mu": window.mu,
              "nu": window.nu, "gfcs": len(gfcs), "checks": rows,
              "verdict": "exact match" if ok else "mismatch"}
    if not ok:
        report["witness"] = [g.to_json() for g in gfcs]
        raise PropertyViolation("GFc identity mismatch", report)
    return report


def cmd_cluster_pressure(args):
    from .gfc import bulk_c_k, truncated_cluster_log

    model = load_model(args.model)
    fam = _family(model, args)
    if args.window:
        window = _region(model, args, fam)
        if window.nu is None:
            raise ModelError("cluster-pressure: the window needs --nu")
        z = _fraction(args.z or "100")
        out = truncated_cluster_log(model, fam, window, z, args.max_cluster)
        out.update(model=model.name, window=window.describe(), z=rat_str(z))
        return out
    nu = args.nu or 1
    r = bulk_c_k(model, fam, nu, args.K)
    r["coefficients"] = [rat_str(c) for c in r["coefficients"]]
    r["model"] = model.name
    return r


def cmd_bz(args):
    from .gfc import BZParams, bz_certificate

    model = load_model(args.model)
    fam = _family(model, args)
    params = BZParams.for_model(model, _fraction(args.theta), _fraction(args.xi),
                                _fraction(args.varsigma))
    report = bz_certificate(model, fam, args.nu, _fraction(args.z), params, args.cutoff)
    report["model"] = model.name
    if not args.verbose:
        report.pop("rows", None)
    if not report["passed"]:
        raise PropertyViolation("certificate conditions not met", report)
    return report


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="latgas", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, region=False):
        sp.add_argument("--model", required=True, help="built-in name or JSON model file")
        sp.add_argument("--period-bound", type=int, default=10)
        sp.add_argument("--max-states", type=int, help="state budget (overrides LATGAS_BUDGET)")
        sp.add_argument("--threads", type=int, default=os.cpu_count(),
                        help="accepted for compatibility; work is single-threaded")
        sp.add_argument("--manifest", help="write the run manifest here instead of stderr")
        sp.add_argument("-o", "--output", help="write the report here instead of stdout")
        if region:
            g = sp.add_argument_group("region")
            g.add_argument("--region", help="region JSON (inline or file)")
            g.add_argument("--torus", help="periodic extents, e.g. 4x4")
            g.add_argument("--box", help="free box extents")
            g.add_argument("--window", help="anchor box of a tiled window, e.g. 6x6")
            g.add_argument("--mu", type=int, help="tiling label of the window")
            g.add_argument("--nu", type=int, help="boundary phase of the window")

    sp = sub.add_parser("coverings", help="perfect coverings of a model")
    common(sp)
    sp.set_defaults(func=cmd_coverings)

    sp = sub.add_parser("check-sliding", help="bounded non-sliding certificate")
    common(sp)
    sp.add_argument("--max-particles", type=int, default=3)
    sp.add_argument("--verbose", action="store_true", help="list every checked class")
    sp.set_defaults(func=cmd_check_sliding)

    sp = sub.add_parser("partition", help="partition polynomial or value")
    common(sp, region=True)
    fz = sp.add_mutually_exclusive_group()
    fz.add_argument("--z", help="uniform fugacity (rational)")
    fz.add_argument("--fugacity-file", help='JSON {"z": ..., "overrides": [[site, z], ...]}')
    sp.set_defaults(func=cmd_partition)

    sp = sub.add_parser("series", help="Mayer or Gaunt-Fisher coefficients")
    common(sp)
    sp.add_argument("--kind", choices=("gf", "mayer"), default="gf")
    sp.add_argument("--rings", help="comma-separated ring lengths")
    sp.add_argument("--tori", help="comma-separated torus extents, e.g. 4x4,6x6,8x8")
    sp.add_argument("--K", type=int)
    sp.set_defaults(func=cmd_series)

    sp = sub.add_parser("zeros", help="Lee-Yang zeros of a partition polynomial")
    common(sp, region=True)
    sp.add_argument("--dps", type=int)
    sp.add_argument("--K", type=int, help="orders checked in the power-sum identities")
    sp.add_argument("--tol", type=float, default=1e-9)
    sp.add_argument("--csv", help="also write the zeros as CSV to this file")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.set_defaults(func=cmd_zeros)

    sp = sub.add_parser("gfc-verify", help="check the GFc identity on a window")
    common(sp, region=True)
    sp.add_argument("--z", action="append", default=None, help="fugacity; repeatable")
    sp.add_argument("--cutoff", type=int, help="support size cutoff (--max-cluster)")
    sp.set_defaults(func=cmd_gfc_verify)

    sp = sub.add_parser("cluster-pressure", help="cluster-expansion pressure coefficients")
    common(sp, region=True)
    sp.add_argument("--K", type=int, default=2)
    sp.add_argument("--z", help="fugacity for the window comparison")
    sp.add_argument("--max-cluster", type=int, default=3)
    sp.set_defaults(func=cmd_cluster_pressure)

    sp = sub.add_parser("bz-certificate", help="cluster-expansion convergence conditions")
    common(sp)
    sp.add_argument("--nu", type=int, default=1)
    sp.add_argument("--z", required=True)
    sp.add_argument("--theta", default="1/4")
    sp.add_argument("--xi", default="1/4")
    sp.add_argument("--varsigma", default="1")
    sp.add_argument("--cutoff", type=int, default=20)
    sp.add_argument("--verbose", action="store_true", help="include per-class rows")
    sp.set_defaults(func=cmd_bz)
    return p


def _manifest(args, text, started):
    params = {k: v for k, v in sorted(vars(args).items())
              if k not in ("func", "manifest", "output", "command", "model")}
    return {"command": args.command, "model": args.model, "parameters": params,
            "version": __version__, "wall_time_s": round(time.time() - started, 3),
            "output_sha256": hashlib.sha256(text.encode()).hexdigest()}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "gfc-verify" and not args.z:
        args.z = ["3"]
    saved = os.environ.get("LATGAS_BUDGET")
    if args.max_states:
        os.environ["LATGAS_BUDGET"] = str(args.max_states)
    started = time.time()
    code = EXIT_OK
    try:
        result = args.func(args)
    except PropertyViolation as exc:
        result = dict(exc.report, error=str(exc))
        code = EXIT_VIOLATION
    except CoveringError as exc:
        result = {"error": str(exc), "kind": exc.kind, "witness": exc.witness}
        code = EXIT_VIOLATION
    except BudgetExceeded as exc:
        result = {"error": f"budget exceeded: {exc}"}
        code = EXIT_BUDGET
    except (ModelError, BoundaryError, PoleError, ValueError, OSError) as exc:
        result = {"error": f"validation error: {exc}"}
        code = EXIT_INVALID
    finally:
        if saved is None:
            os.environ.pop("LATGAS_BUDGET", None)
        else:
            os.environ["LATGAS_BUDGET"] = saved
    text = result if isinstance(result, str) else dumps(result)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    man = dumps(dict(_manifest(args, text, started), exit_code=code))
    if args.manifest:
        with open(args.manifest, "w") as fh:
            fh.write(man)
    else:
        sys.stderr.write(man)
    return code


if __name__ == "__main__":
    sys.exit(main())
