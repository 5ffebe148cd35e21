"""Command-line front end.

Every subcommand reads an optional JSON config, applies flag overrides,
writes its data files plus ``manifest.json`` into the output directory and
exits with 0 (success), 2 (validation), 3 (solver failure) or
4 (verification failure).  Failures also write ``error.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ProblemConfig
from .continuation import BranchTracer, StepControls, branches_to_diagram
from .errors import AnnbifError, ConfigError, SolverError
from .harmonics import harmonic_report
from .radial import solve_radial, write_columns_csv
from .spectral import SCAN_POINTS, find_all_degeneracies, morse_index, parity_report, scan_alpha1
from .verify import SUITES, run_verify

OUT_ENV = "ANNBIF_OUT"
EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
SPECTRUM_POINTS = 50
DEFAULT_SCAN = SCAN_POINTS


class VerificationFailed(AnnbifError):
    pass


def write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=1)
        fh.write("\n")


# -- argument handling --------------------------------------------------------


def _int_list(text):
    text = text.strip()
    if not text:
        return []
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if any(k < 1 for k in ks):
        raise argparse.ArgumentTypeError("harmonic indices must be >= 1")
    return ks


def _p_range(text):
    try:
        lo, hi = (float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo,hi, got {text!r}") from None
    if not 1 < lo < hi:
        raise argparse.ArgumentTypeError(f"need 1 < lo < hi, got {text!r}")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--n2", action="store_true", help="N = 2 mode with Dancer cones")
    common.add_argument("--p", type=float, help="override the exponent p")

    ap = argparse.ArgumentParser(prog="annbif", description="Radial and nonradial solutions on an annulus.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("radial", parents=[common], help="positive radial solution at p")

    sp = sub.add_parser("spectrum", parents=[common], help="alpha1(p) on a log-spaced grid")
    sp.add_argument("--p-range", type=_p_range, default=(1.05, 30.0))
    sp.add_argument("--points", type=int, default=SPECTRUM_POINTS)

    bp = sub.add_parser("bifurcations", parents=[common], help="degeneracies and Morse index changes")
    bp.add_argument("--k", type=_int_list, default=[1, 2])
    bp.add_argument("--p-range", type=_p_range, default=(1.01, 3.0))
    bp.add_argument("--n-scan", type=int, default=DEFAULT_SCAN)

    hp = sub.add_parser("harmonics", parents=[common], help="exact harmonic coefficients and checks")
    hp.add_argument("--k-max", type=int, default=10)
    hp.add_argument("--dims", type=_int_list, default=[3, 4, 5, 7])

    cp = sub.add_parser("continue", parents=[common], help="continue nonradial branches")
    cp.add_argument("--k", type=_int_list, default=[1])
    cp.add_argument("--p-range", type=_p_range, default=(1.01, 3.0))
    cp.add_argument("--n-scan", type=int, default=DEFAULT_SCAN)
    cp.add_argument("--steps", type=int, default=20)
    cp.add_argument("--directions", type=str, default="1,-1")
    cp.add_argument("--p-target", type=float, default=None)

    vp = sub.add_parser("verify", parents=[common], help="invariant suites")
    vp.add_argument("--suite", choices=SUITES + ("all",), default="all")
    vp.add_argument("--samples", type=int, default=200)
    vp.add_argument("--noise", type=float, default=0.0, help="perturb random samples (forced-failure path)")
    return ap


def load_config(args) -> ProblemConfig:
    cfg = ProblemConfig.from_json(args.config) if args.config else ProblemConfig()
    over = {}
    if args.n2:
        over["N"] = 2
    if args.p is not None:
        over["p"] = args.p
    return cfg.replace(**over) if over else cfg


def out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV) or "out")
    d.mkdir(parents=True, exist_ok=True)
    return d


# -- commands -----------------------------------------------------------------


def cmd_radial(config, args, out: Path) -> list:
    prof = solve_radial(config)
    prof.to_csv(out / "radial.csv")
    prof.to_json(out / "radial.json")
    return ["radial.csv", "radial.json"]


def cmd_spectrum(config, args, out: Path) -> list:
    lo, hi = args.p_range
    grid = np.geomspace(lo, hi, args.points)
    rows = scan_alpha1(config, grid)
    ps = [p for p, _ in rows]
    al = [a for _, a in rows]
    mi = [morse_index(a, config.N) for a in al]
    write_columns_csv(out / "spectrum.csv", ("p", "alpha1", "morse_index"), (ps, al, mi))
    return ["spectrum.csv"]


def _degeneracies(config, ks, args):
    return find_all_degeneracies(config, ks, args.p_range, n_scan=args.n_scan)


def cmd_bifurcations(config, args, out: Path) -> list:
    found = _degeneracies(config, args.k, args) if args.k else {}
    doc = {
        "p_range": list(args.p_range),
        "n_scan": args.n_scan,
        "degeneracies": [d.to_record() for k in args.k for d in found[k]],
        "parity": [parity_report(found[k]) | {"k": k} for k in args.k],
    }
    write_json(out / "degeneracies.json", doc)
    return ["degeneracies.json"]


def cmd_harmonics(config, args, out: Path) -> list:
    rep = harmonic_report(args.k_max, args.dims)
    write_json(out / "harmonics.json", rep)
    json.dump(rep, sys.stdout, indent=1)
    sys.stdout.write("\n")
    return ["harmonics.json"]


def _directions(text):
    try:
        ds = [int(t) for t in text.split(",")]
    except ValueError:
        raise ConfigError("directions", f"expected a list of +1/-1, got {text!r}") from None
    if not ds or any(d not in (1, -1) for d in ds):
        raise ConfigError("directions", f"expected a list of +1/-1, got {text!r}")
    return ds


def cmd_continue(config, args, out: Path) -> list:
    if args.steps < 0:
        raise ConfigError("steps", f"must be >= 0, got {args.steps}")
    dirs = _directions(args.directions)
    found = _degeneracies(config, args.k, args) if args.k else {}
    ctrl = StepControls(p_target=args.p_target)
    files, branches, summary = [], [], []
    for k in args.k:
        dps = [d for d in found[k] if d.is_morse_change]
        if not dps:
            summary.append({"k": k, "error": "no Morse-index-changing point in p-range"})
            continue
        dp = dps[0]
        try:
            tracer = BranchTracer(config, dp, ctrl=ctrl)
        except (SolverError, ValueError) as exc:
            summary.append({"k": k, "error": f"{type(exc).__name__}: {exc}"})
            continue
        for d in dirs:
            name = f"branch_k{k}_{'plus' if d > 0 else 'minus'}"
            try:
                b = tracer.continue_branch(d, args.steps)
            except (SolverError, ValueError) as exc:
                summary.append({"k": k, "direction": d, "error": f"{type(exc).__name__}: {exc}"})
                continue
            b.to_csv(out / f"{name}.csv")
            files.append(f"{name}.csv")
            summary.append({"k": k, "file": f"{name}.csv"} | b.manifest())
            branches.append(b)
    branches_to_diagram(branches, out / "diagram.csv")
    write_json(out / "branches.json", summary)
    return files + ["diagram.csv", "branches.json"]


def cmd_verify(config, args, out: Path) -> list:
    rep = run_verify(config, args.suite, seed=args.seed, samples=args.samples, noise=args.noise)
    write_json(out / "verify.json", rep)
    if not rep["passed"]:
        raise VerificationFailed(f"{rep['violations']} check(s) failed; see verify.json")
    return ["verify.json"]


COMMANDS = {
    "radial": cmd_radial,
    "spectrum": cmd_spectrum,
    "bifurcations": cmd_bifurcations,
    "harmonics": cmd_harmonics,
    "continue": cmd_continue,
    "verify": cmd_verify,
}


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the clock for reproducible reruns
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = time.gmtime(int(epoch)) if epoch and epoch.isdigit() else time.gmtime()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", t)


def _manifest(args, config, outputs, status):
    """Run record; timestamps live only here so data files stay byte-identical."""
    return {
        "command": args.command,
        "status": status,
        "config": config.to_dict() if config is not None else None,
        "seed": args.seed,
        "outputs": outputs,
        "versions": {
            "annbif": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timestamp": _timestamp(),
    }


def _fail(out, args, config, code, exc, files=()):
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        err["field"] = exc.field
    if isinstance(exc, SolverError) and exc.p is not None:
        err["p"] = exc.p
    sys.stderr.write(json.dumps(err) + "\n")
    if out is not None:
        write_json(out / "error.json", err)
        write_json(out / "manifest.json", _manifest(args, config, [*files, "error.json"], "failed"))
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = config = None
    try:
        out = out_dir(args)
        config = load_config(args)
        files = COMMANDS[args.command](config, args, out)
    except ConfigError as exc:
        return _fail(out, args, config, EXIT_VALIDATION, exc)
    except VerificationFailed as exc:
        # verify.json already holds the full report
        return _fail(out, args, config, EXIT_VERIFY, exc, ["verify.json"])
    except SolverError as exc:
        return _fail(out, args, config, EXIT_SOLVER, exc)
    except (ValueError, OSError) as exc:
        return _fail(out, args, config, EXIT_VALIDATION, exc)
    write_json(out / "manifest.json", _manifest(args, config, files, "ok"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
