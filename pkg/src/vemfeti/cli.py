"""Command line driver: mesh utilities, single solves, experiment presets.

Subcommands
-----------
mesh gen    generate a reference mesh and write it to a file
mesh info   print h, h_min, gamma_star and entity counts of a mesh file
solve       one decomposed solve, row printed as CSV
experiment  preset sweeps (test1: scalability, test2: quasi-optimality)

Exit codes: 0 success, 2 usage or I/O error, 3 numerical failure,
4 mesh or conformity error.
"""

import argparse
import sys
import time

import numpy as np

from .errors import MeshError, NonConvergenceError, NumericalError, UsageError
from .mesh import (generate_cube_grid, generate_truncated_octahedra,
                   mesh_quality, read_polymesh, write_polymesh)
from .decomp import (classify_interface, primal_constraints, replicate,
                     rho_checkerboard, rho_const, set_random_load, solve_glued)
from .fetidp import solve_fetidp

VARIANTS = ("V", "E", "F", "VE", "VF", "EF", "VEF")

CSV_HEADER = "L,variant,dofs,primal,kappa,iters,seconds,seed"

CONFIG_KEYS = ("test", "kind", "ref", "refs", "subdomains", "variants",
               "rho", "gamma", "tol", "seed", "out")


def sinusoidal_load(x):
    """Smooth separable source used for constant-coefficient runs."""
    return (np.sin(2.0 * np.pi * x[0]) * np.sin(2.0 * np.pi * x[1])
            * np.sin(2.0 * np.pi * x[2]))


# ---------------------------------------------------------------------------
# option parsing helpers


def parse_rho(text):
    """Coefficient spec: const:VALUE or checkerboard:R1,R2."""
    name, sep, rest = text.partition(":")
    if name == "const":
        if not sep:
            raise UsageError("const coefficient needs a value, e.g. const:1")
        try:
            return ("const", float(rest))
        except ValueError:
            raise UsageError("bad coefficient value %r" % rest)
    if name == "checkerboard":
        parts = rest.split(",") if sep else []
        if len(parts) != 2:
            raise UsageError("checkerboard needs two values, e.g. "
                             "checkerboard:1e-5,1e5")
        try:
            return ("checkerboard", float(parts[0]), float(parts[1]))
        except ValueError:
            raise UsageError("bad coefficient value in %r" % rest)
    raise UsageError("unknown coefficient spec %r (const:X or "
                     "checkerboard:R1,R2)" % text)


def rho_vector(spec, N):
    if spec[0] == "const":
        return rho_const(N, spec[1])
    return rho_checkerboard(N, spec[1], spec[2])


def default_tol(spec):
    """Stopping tolerance tied to the load protocol of the coefficient.

    Constant coefficients use the smooth load and a relative residual
    reduction of 1e-6; jumping coefficients use a random load and 1e-12.
    """
    return 1e-6 if spec[0] == "const" else 1e-12


def parse_variant(text):
    v = text.strip().upper()
    if v not in VARIANTS:
        raise UsageError("unknown variant %r (choose from %s)"
                         % (text, ", ".join(VARIANTS)))
    return v


def parse_gen(text):
    """Reference generator spec KIND:N with KIND in {oct, cube}."""
    kind, sep, rest = text.partition(":")
    if kind not in ("oct", "cube") or not sep:
        raise UsageError("bad generator spec %r (oct:N or cube:N)" % text)
    try:
        n = int(rest)
    except ValueError:
        raise UsageError("bad generator level %r" % rest)
    return kind, n


def generate_reference(kind, n):
    if kind == "oct":
        return generate_truncated_octahedra(n)
    if kind == "cube":
        return generate_cube_grid(n)
    raise UsageError("unknown mesh kind %r" % kind)


# ---------------------------------------------------------------------------
# result rows


def format_kappa(kappa):
    # notation switch decided on the rounded value so that formatting a
    # parsed row reproduces it byte for byte
    if not np.isfinite(kappa):
        return "%.6e" % kappa
    fixed = "%.6f" % kappa
    if float(fixed) >= 1e4:
        return "%.6e" % kappa
    return fixed


def format_row(row):
    L, variant, dofs, primal, kappa, iters, seconds, seed = row
    return "%d,%s,%d,%d,%s,%d,%.3f,%d" % (
        L, variant, dofs, primal, format_kappa(kappa), iters, seconds, seed)


def emit_csv(rows, path=None, comments=()):
    """Write header, data rows and trailing comment lines; path None is
    stdout."""
    lines = [CSV_HEADER]
    lines.extend(format_row(r) for r in rows)
    lines.extend(comments)
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def parse_csv(text):
    """Inverse of emit_csv on the data rows; comment lines are skipped."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines or lines[0] != CSV_HEADER:
        raise UsageError("missing or wrong CSV header")
    rows = []
    for ln in lines[1:]:
        p = ln.split(",")
        if len(p) != 8:
            raise UsageError("bad CSV row %r" % ln)
        rows.append((int(p[0]), p[1], int(p[2]), int(p[3]), float(p[4]),
                     int(p[5]), float(p[6]), int(p[7])))
    return rows


def row_sort_key(row):
    return (row[0], row[2], VARIANTS.index(row[1]))


# ---------------------------------------------------------------------------
# solving


def run_case(ref_mesh, N, variants, spec, gamma, tol, seed, timing=False):
    """Solve one decomposition for several variants; returns result rows.

    The reference is replicated into an N^3 grid of mirrored subdomains.
    Constant coefficients take the smooth load; jumping coefficients take
    the seeded random load. A single subdomain short-circuits to the direct
    solve with unit condition number.
    """
    rho = rho_checkerboard(N, spec[1], spec[2]) if spec[0] == "checkerboard" \
        else rho_const(N, spec[1])
    load = sinusoidal_load if spec[0] == "const" else None
    dec = replicate(ref_mesh, N, rho, load=load)
    if load is None:
        set_random_load(dec, seed)
    dofs = int((~dec.on_dirichlet).sum())
    if tol is None:
        tol = default_tol(spec)
    rows = []
    if N == 1:
        t0 = time.perf_counter()
        solve_glued(dec)
        dt = time.perf_counter() - t0
        for v in variants:
            rows.append((1, v, dofs, 0, 1.0, 0, dt if timing else 0.0, seed))
        return rows
    iface = classify_interface(dec)
    for v in variants:
        cons = primal_constraints(dec, iface, v, ref_mesh=ref_mesh)
        t0 = time.perf_counter()
        res = solve_fetidp(dec, cons, tol=tol, gamma=gamma)
        dt = time.perf_counter() - t0
        if not res.converged:
            raise NonConvergenceError(
                "PCG did not reach tol=%g for variant %s at L=%d"
                % (tol, v, N ** 3))
        rows.append((N ** 3, v, dofs, res.num_primal, res.kappa_est,
                     res.iterations, dt if timing else 0.0, seed))
    return rows


# ---------------------------------------------------------------------------
# experiment configs

DESK_DEFAULTS = {
    "test1": {"kind": "oct", "ref": "4", "subdomains": [2, 3, 4],
              "variants": list(VARIANTS), "rho": ("const", 1.0),
              "gamma": 1.0, "tol": None, "seed": 0, "out": "test1.csv"},
    "test2": {"kind": "oct", "refs": [2, 3, 4, 5], "subdomains": [3],
              "variants": ["V", "VE"], "rho": ("const", 1.0),
              "gamma": 1.0, "tol": None, "seed": 0, "out": "test2.csv"},
}

FULL_OVERRIDES = {
    "test1": {"subdomains": [2, 4, 6, 8, 10, 12]},
    "test2": {"subdomains": [6], "refs": [2, 3, 4, 5, 6, 7, 8, 9]},
}


def read_config(path):
    """Flat key = value file; # starts a comment; keys must be known."""
    raw = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            key, sep, value = body.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key or not value:
                raise UsageError("config line %d: expected key = value"
                                 % lineno)
            if key not in CONFIG_KEYS:
                raise UsageError("config line %d: unknown key %r"
                                 % (lineno, key))
            if key in raw:
                raise UsageError("config line %d: duplicate key %r"
                                 % (lineno, key))
            raw[key] = value
    return raw


def _int_list(value, key):
    try:
        items = [int(s) for s in value.split(",") if s.strip()]
    except ValueError:
        raise UsageError("bad integer list for %s: %r" % (key, value))
    if not items:
        raise UsageError("empty list for %s" % key)
    return items


def build_config(test, raw, full=False):
    """Merge a raw key/value config over the preset defaults of a test."""
    if test not in DESK_DEFAULTS:
        raise UsageError("unknown experiment %r" % test)
    cfg = dict(DESK_DEFAULTS[test])
    if full:
        cfg.update(FULL_OVERRIDES[test])
    if "test" in raw and raw["test"] != test:
        raise UsageError("config is for %r, not %r" % (raw["test"], test))
    if "refs" in raw and test != "test2":
        raise UsageError("refs applies to test2 only")
    if "ref" in raw and test != "test1":
        raise UsageError("ref applies to test1 only")
    for key, value in raw.items():
        if key == "test":
            continue
        elif key == "kind":
            if value not in ("oct", "cube", "file"):
                raise UsageError("kind must be oct, cube or file")
            cfg["kind"] = value
        elif key == "ref":
            cfg["ref"] = value
        elif key == "refs":
            cfg["refs"] = _int_list(value, key)
        elif key == "subdomains":
            cfg["subdomains"] = _int_list(value, key)
        elif key == "variants":
            cfg["variants"] = [parse_variant(s) for s in value.split(",")]
        elif key == "rho":
            cfg["rho"] = parse_rho(value)
        elif key == "gamma":
            cfg["gamma"] = float(value)
        elif key == "tol":
            cfg["tol"] = float(value)
        elif key == "seed":
            cfg["seed"] = int(value)
        elif key == "out":
            cfg["out"] = value
    if any(n < 1 for n in cfg["subdomains"]):
        raise UsageError("subdomain counts must be positive")
    if test == "test2":
        if len(cfg["subdomains"]) != 1:
            raise UsageError("test2 uses a single subdomain count")
        if cfg["kind"] == "file":
            raise UsageError("test2 needs a generated reference family")
    return cfg


def _config_reference(cfg):
    if cfg["kind"] == "file":
        return read_polymesh(cfg["ref"])
    try:
        n = int(cfg["ref"])
    except ValueError:
        raise UsageError("ref must be an integer level for kind=%s"
                         % cfg["kind"])
    return generate_reference(cfg["kind"], n)


def plan_lines(test, cfg):
    lines = []
    levels = cfg["refs"] if test == "test2" else [cfg["ref"]]
    for lv in levels:
        for N in cfg["subdomains"]:
            for v in cfg["variants"]:
                lines.append("# plan %s ref=%s:%s L=%d variant=%s rho=%s "
                             "gamma=%g seed=%d"
                             % (test, cfg["kind"], lv, N ** 3, v,
                                rho_label(cfg["rho"]), cfg["gamma"],
                                cfg["seed"]))
    return lines


def rho_label(spec):
    if spec[0] == "const":
        return "const:%g" % spec[1]
    return "checkerboard:%g,%g" % (spec[1], spec[2])


def run_test1(cfg, timing=False):
    """Scalability sweep: one reference, growing subdomain grids."""
    ref = _config_reference(cfg)
    rows = []
    for N in sorted(cfg["subdomains"]):
        rows.extend(run_case(ref, N, cfg["variants"], cfg["rho"],
                             cfg["gamma"], cfg["tol"], cfg["seed"],
                             timing=timing))
    rows.sort(key=row_sort_key)
    return rows, []


def run_test2(cfg, timing=False):
    """Quasi-optimality sweep: fixed grid, refined references; appends the
    least-squares fit of sqrt(kappa) against 1 + log(H/h) for variant VE."""
    N = cfg["subdomains"][0]
    rows, points = [], []
    for n in cfg["refs"]:
        ref = generate_reference(cfg["kind"], n)
        Hh = 1.0 / mesh_quality(ref).h
        batch = run_case(ref, N, cfg["variants"], cfg["rho"], cfg["gamma"],
                         cfg["tol"], cfg["seed"], timing=timing)
        rows.extend(batch)
        for row in batch:
            if row[1] == "VE":
                points.append((1.0 + np.log(Hh), np.sqrt(row[4])))
    comments = []
    if len(points) >= 2:
        x = np.array([p[0] for p in points])
        y = np.array([p[1] for p in points])
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        ss_tot = float(((y - y.mean()) ** 2).sum())
        r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
        comments.append("# fit variant=VE slope=%.6f intercept=%.6f r2=%.6f"
                        % (slope, intercept, r2))
    return rows, comments


# ---------------------------------------------------------------------------
# subcommands


def cmd_mesh(args):
    if args.mesh_cmd == "gen":
        mesh = generate_reference(args.kind, args.n)
        write_polymesh(mesh, args.out)
        return 0
    mesh = read_polymesh(args.path)
    q = mesh_quality(mesh)
    print("%.6e,%.6e,%.6e,%d,%d,%d" % (q.h, q.h_min, q.gamma_star,
                                       mesh.num_vertices, mesh.num_faces,
                                       mesh.num_cells))
    return 0


def cmd_solve(args):
    if args.mesh is not None:
        ref = read_polymesh(args.mesh)
    else:
        kind, n = parse_gen(args.gen)
        ref = generate_reference(kind, n)
    spec = parse_rho(args.rho)
    variant = parse_variant(args.variant)
    if args.gamma < 0.5:
        raise UsageError("scaling exponent gamma must be >= 1/2")
    rows = run_case(ref, args.subdomains, [variant], spec, args.gamma,
                    args.tol, args.seed, timing=args.timing)
    text = emit_csv(rows, path=None)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


def cmd_experiment(args):
    raw = read_config(args.config) if args.config else {}
    cfg = build_config(args.test, raw, full=args.full)
    if args.plan_only:
        for line in plan_lines(args.test, cfg):
            print(line)
        return 0
    runner = run_test1 if args.test == "test1" else run_test2
    rows, comments = runner(cfg, timing=args.timing)
    emit_csv(rows, path=cfg["out"], comments=comments)
    print("wrote %d rows to %s" % (len(rows), cfg["out"]))
    return 0


def build_parser():
    top = argparse.ArgumentParser(prog="vemfeti", description=__doc__)
    sub = top.add_subparsers(dest="cmd", required=True)

    pm = sub.add_parser("mesh", help="generate or inspect mesh files")
    pms = pm.add_subparsers(dest="mesh_cmd", required=True)
    pgen = pms.add_parser("gen", help="generate a reference mesh")
    pgen.add_argument("--kind", choices=("oct", "cube"), required=True)
    pgen.add_argument("--n", type=int, required=True,
                      help="refinement level of the generator")
    pgen.add_argument("--out", required=True)
    pinfo = pms.add_parser("info", help="print h,h_min,gamma_star,nv,nf,nc")
    pinfo.add_argument("path")

    ps = sub.add_parser("solve", help="one decomposed solve")
    src = ps.add_mutually_exclusive_group(required=True)
    src.add_argument("--mesh", help="reference mesh file")
    src.add_argument("--gen", help="reference generator, e.g. oct:2")
    ps.add_argument("--subdomains", type=int, required=True,
                    help="N for an N x N x N subdomain grid")
    ps.add_argument("--variant", default="VE")
    ps.add_argument("--rho", default="const:1")
    ps.add_argument("--tol", type=float, default=None,
                    help="PCG tolerance (default 1e-6 const, 1e-12 "
                         "checkerboard)")
    ps.add_argument("--gamma", type=float, default=1.0)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", default=None, help="also write the row here")
    ps.add_argument("--timing", action="store_true",
                    help="report wall-clock seconds instead of 0.000")

    pe = sub.add_parser("experiment", help="preset experiment sweeps")
    pe.add_argument("test", choices=("test1", "test2"))
    pe.add_argument("--config", default=None, help="key = value file")
    pe.add_argument("--full", action="store_true",
                    help="full-scale sweep; unbounded runtime")
    pe.add_argument("--plan-only", action="store_true",
                    help="list the planned runs without solving")
    pe.add_argument("--timing", action="store_true",
                    help="report wall-clock seconds instead of 0.000")
    return top


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.cmd == "mesh":
            return cmd_mesh(args)
        if args.cmd == "solve":
            return cmd_solve(args)
        return cmd_experiment(args)
    except UsageError as exc:
        print("vemfeti: error: %s" % exc, file=sys.stderr)
        return 2
    except NumericalError as exc:
        print("vemfeti: numerical failure: %s" % exc, file=sys.stderr)
        return 3
    except MeshError as exc:
        print("vemfeti: mesh error: %s" % exc, file=sys.stderr)
        return 4
    except OSError as exc:
        print("vemfeti: error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
