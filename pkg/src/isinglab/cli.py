"""Batch experiment harness: the ``isinglab`` command.

Subcommands: gen, exact, saw, couple, scan, certify, cutwidth.  Stochastic
commands require --seed; identical config and seed reproduce byte-identical
CSV/JSON outputs for any --threads value.  Outputs are written atomically;
--plot additionally renders a PNG figure next to the delimited output.

Exit codes: 0 success, 2 certification refused, 3 size cap exceeded,
4 invalid input.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import certify as certify_mod
from . import cutwidth as cutwidth_mod
from . import plots
from .dynamics import UpdateSchedule, grand_coupling_run
from .errors import CertificationRefused, InstanceFormatError, SizeCapError
from .exact import enumerate_gibbs, exact_mixing_time, transition_matrix
from .graphs import (
    Graph,
    build_instance,
    from_graph,
    gen_erdos_renyi,
    gen_galton_watson_poisson,
    gen_random_regular,
    read_instance,
    write_instance,
)
from .rng import derive_seed
from .saw import spatial_bound_a_u
from .stats import fit_line, wilson_interval

SCHEMA = "isinglab-v1"

EXIT_OK = 0
EXIT_REFUSED = 2
EXIT_SIZE_CAP = 3
EXIT_INVALID = 4


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".isinglab-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _csv_text(kind: str, header: list, rows: list) -> str:
    lines = [f"# schema: {SCHEMA} {kind}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(x) for x in row))
    return "\n".join(lines) + "\n"


def _csv_cell(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return ""
    return str(x)


def _emit(args, doc: dict, kind: str, csv_rows=None, csv_header=None) -> None:
    """Write the JSON doc (stdout or --out); optionally a CSV alongside."""
    text = _dump_json(doc)
    if args.out:
        base, ext = os.path.splitext(args.out)
        json_path = args.out if ext == ".json" else base + ".json"
        if args.format == "csv" and csv_rows is not None:
            _write_atomic(base + ".csv", _csv_text(kind, csv_header, csv_rows))
        _write_atomic(json_path, text)
    else:
        sys.stdout.write(text)
        if args.format == "csv" and csv_rows is not None:
            sys.stdout.write(_csv_text(kind, csv_header, csv_rows))


def _require_seed(args) -> int:
    if args.seed is None:
        raise ValueError("--seed is required for stochastic commands")
    return int(args.seed)


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            flag = "--in" if name == "infile" else "--" + name.replace("_", "-")
            raise ValueError(f"{flag} is required for this command")


def _median_summary(times, censored_flags):
    """Median and order-statistic CI treating censored replicas as +inf."""
    arr = np.array([math.inf if c else t for t, c in zip(times, censored_flags)],
                   dtype=np.float64)
    m = len(arr)
    arr.sort()
    med = float(np.median(arr))
    if math.isinf(med):
        return None, None
    span = 0.98 * math.sqrt(m)
    lo_idx = max(0, int(math.floor((m - span) / 2.0)) - 1)
    hi_idx = min(m - 1, int(math.ceil(1.0 + (m + span) / 2.0)) - 1)
    lo, hi = float(arr[lo_idx]), float(arr[hi_idx])
    if math.isinf(hi):
        hi = None
    return med, [lo, hi]


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------

FAMILIES = ("er", "regular", "gw", "cycle", "path", "star", "grid", "file")


def _validate_family_sizes(args) -> None:
    fam = args.family
    if fam in ("er", "regular") and args.n < 1:
        raise ValueError("--n must be positive")
    if fam == "cycle" and args.n < 3:
        raise ValueError("a simple cycle needs n >= 3")
    if fam == "path" and args.n < 2:
        raise ValueError("a path needs n >= 2")
    if fam == "star" and args.n < 2:
        raise ValueError("a star needs n >= 2")
    if fam == "grid" and (args.rows < 1 or args.cols < 1):
        raise ValueError("grid needs --rows and --cols")


def _family_graph(args, seed_val) -> Graph:
    fam = args.family
    if fam == "er":
        return gen_erdos_renyi(args.n, args.d, seed_val)
    if fam == "regular":
        return gen_random_regular(args.n, int(args.d), seed_val)
    if fam == "gw":
        return gen_galton_watson_poisson(args.d, args.depth, seed_val)
    if fam == "cycle":
        return Graph.from_edges(args.n, [(i, (i + 1) % args.n) for i in range(args.n)])
    if fam == "path":
        return Graph.from_edges(args.n, [(i, i + 1) for i in range(args.n - 1)])
    if fam == "star":
        return Graph.from_edges(args.n, [(0, i) for i in range(1, args.n)])
    if fam == "grid":
        rows, cols = args.rows, args.cols
        edges = []
        for r in range(rows):
            for c in range(cols):
                v = r * cols + c
                if c + 1 < cols:
                    edges.append((v, v + 1))
                if r + 1 < rows:
                    edges.append((v, v + cols))
        return Graph.from_edges(rows * cols, edges)
    raise ValueError(f"unknown family {fam!r}")


def cmd_gen(args) -> int:
    _require(args, "family")
    if args.family == "file":
        _require(args, "infile")
        inst = read_instance(args.infile)
    else:
        _validate_family_sizes(args)
        if args.family in ("er", "regular", "gw"):
            seed_val = _require_seed(args)
        else:
            seed_val = 0
        graph = _family_graph(args, seed_val)
        fields = [(v, args.h) for v in range(graph.n)] if args.h else []
        inst = from_graph(graph, args.beta, fields)
    if not args.out:
        raise ValueError("gen requires --out")
    write_instance(inst, args.out)
    sys.stdout.write(_dump_json({
        "family": args.family, "n": inst.n, "m": inst.graph.m,
        "beta_max": inst.beta_max, "max_degree": inst.graph.max_degree,
        "out": args.out,
    }))
    return EXIT_OK


# ---------------------------------------------------------------------------
# exact
# ---------------------------------------------------------------------------

def cmd_exact(args) -> int:
    _require(args, "infile")
    inst = read_instance(args.infile)
    enum_cap = args.cap if args.cap else 16
    dist = enumerate_gibbs(inst, cap=enum_cap)
    spec = transition_matrix(inst, cap=min(enum_cap, 12), distribution=dist)
    doc = {
        "log_Z": dist.log_z,
        "marginals": [float(x) for x in dist.marginals()],
        "free_vertices": [int(v) for v in dist.free],
        "gap": spec.gap,
        "relaxation_time": spec.relaxation_time,
        "mixing_time": exact_mixing_time(spec, dist),
    }
    _emit(args, doc, "exact")
    return EXIT_OK


# ---------------------------------------------------------------------------
# saw
# ---------------------------------------------------------------------------

def cmd_saw(args) -> int:
    _require(args, "infile", "radius")
    inst = read_instance(args.infile)
    centers = range(inst.n) if args.center is None else [args.center]
    rows = []
    docs = []
    for v in centers:
        if inst.clamp[v] != 0:
            continue
        cert = spatial_bound_a_u(inst, v, args.radius)
        docs.append({
            "center": v, "radius": args.radius,
            "a_u": {str(u): val for u, val in sorted(cert.a_u.items())},
            "total": cert.total, "passed": cert.passed,
        })
        for u, val in sorted(cert.a_u.items()):
            rows.append([v, args.radius, u, val, cert.total, int(cert.passed)])
    doc = {"radius": args.radius, "centers": docs,
           "all_pass": all(d["passed"] for d in docs)}
    _emit(args, doc, "saw", csv_rows=rows,
          csv_header=["center", "radius", "boundary_vertex", "a_u", "total", "passed"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# couple / scan
# ---------------------------------------------------------------------------

def _run_replicas(instance, schedule, seed_val, replicas, threads, tag):
    def one(rep):
        return grand_coupling_run(instance, schedule,
                                  derive_seed(seed_val, tag, rep))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(replicas)))
    return [one(rep) for rep in range(replicas)]


def cmd_couple(args) -> int:
    _require(args, "infile")
    seed_val = _require_seed(args)
    inst = read_instance(args.infile)
    horizon = args.horizon if args.horizon else (args.cap or 1_000_000)
    schedule = UpdateSchedule(mode=args.mode, horizon=horizon)
    traces = _run_replicas(inst, schedule, seed_val, args.replicas,
                           args.threads, "couple")
    times = [t.coupling_time for t in traces if t.coupled]
    censored = sum(1 for t in traces if not t.coupled)
    rows = [[seed_val, rep, inst.n, inst.beta_max, inst.graph.max_degree,
             args.mode, t.coupling_time, int(not t.coupled)]
            for rep, t in enumerate(traces)]
    med, med_ci = _median_summary([t.coupling_time if t.coupled else None
                                   for t in traces],
                                  [not t.coupled for t in traces])
    c_lo, c_hi = wilson_interval(censored, args.replicas)
    doc = {
        "n": inst.n, "beta_max": inst.beta_max, "mode": args.mode,
        "horizon": horizon, "replicas": args.replicas,
        "median_coupling_time": med, "median_ci": med_ci,
        "censored_fraction": censored / args.replicas,
        "censored_fraction_ci": [c_lo, c_hi],
        "sandwich_ok": all(t.sandwich_ok for t in traces),
    }
    _emit(args, doc, "couple", csv_rows=rows,
          csv_header=["seed", "replica", "n", "beta", "d", "mode",
                      "coupling_time", "censored_flag"])
    if args.plot and args.out:
        plots.coupling_histogram([t for t in times], censored,
                                 os.path.splitext(args.out)[0] + ".png")
    return EXIT_OK


def _scan_cell(family, n, d, beta, replicas, horizon, mode, seed_val, threads):
    def one(rep):
        gseed = derive_seed(seed_val, f"scan/graph/{family}/{n}/{beta!r}", rep)
        if family == "er":
            graph = gen_erdos_renyi(n, d, gseed)
        elif family == "regular":
            graph = gen_random_regular(n, int(d), gseed)
        elif family == "cycle":
            graph = Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])
        elif family == "path":
            graph = Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])
        elif family == "star":
            graph = Graph.from_edges(n, [(0, i) for i in range(1, n)])
        else:
            raise ValueError(f"family {family!r} not scannable")
        inst = from_graph(graph, beta)
        schedule = UpdateSchedule(mode=mode, horizon=horizon)
        rseed = derive_seed(seed_val, f"scan/run/{family}/{n}/{beta!r}", rep)
        return grand_coupling_run(inst, schedule, rseed)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(replicas)))
    return [one(rep) for rep in range(replicas)]


def cmd_scan(args) -> int:
    _require(args, "family", "n_grid", "beta_grid")
    seed_val = _require_seed(args)
    n_grid = [int(x) for x in args.n_grid.split(",")]
    beta_grid = [float(x) for x in args.beta_grid.split(",")]
    if not n_grid or not beta_grid:
        raise ValueError("empty grids")
    horizon = args.cap or 10_000_000
    rows, cells = [], []
    for n in n_grid:
        for beta in beta_grid:
            traces = _scan_cell(args.family, n, args.d, beta, args.replicas,
                                horizon, args.mode, seed_val, args.threads)
            censored = sum(1 for t in traces if not t.coupled)
            med, med_ci = _median_summary(
                [t.coupling_time if t.coupled else None for t in traces],
                [not t.coupled for t in traces])
            c_lo, c_hi = wilson_interval(censored, args.replicas)
            ratio = (med / (n * math.log(n))) if med is not None and n > 1 else None
            cells.append({
                "family": args.family, "n": n, "d": args.d, "beta": beta,
                "replicas": args.replicas, "median": med, "median_ci": med_ci,
                "censored_fraction": censored / args.replicas,
                "censored_fraction_ci": [c_lo, c_hi],
                "ratio_n_ln_n": ratio,
            })
            for rep, t in enumerate(traces):
                rows.append([args.family, n, args.d, beta, seed_val, rep,
                             args.mode, t.coupling_time, int(not t.coupled)])
    finite = [c["ratio_n_ln_n"] for c in cells if c["ratio_n_ln_n"] is not None]
    doc = {
        "schema": SCHEMA, "family": args.family, "mode": args.mode,
        "horizon_cap": horizon, "cells": cells,
        "ratio_spread": (max(finite) - min(finite)) / min(finite)
        if len(finite) >= 2 else None,
    }
    if not args.out:
        raise ValueError("scan requires --out")
    base = os.path.splitext(args.out)[0]
    _write_atomic(base + ".csv", _csv_text(
        "scan", ["family", "n", "d", "beta", "seed", "replica", "mode",
                 "coupling_time", "censored_flag"], rows))
    _write_atomic(base + ".json", _dump_json(doc))
    if args.plot:
        plots.scan_figure(cells, base + ".png")
    return EXIT_OK


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

def cmd_certify(args) -> int:
    _require(args, "infile")
    inst = read_instance(args.infile)
    if args.radius == "auto":
        d = max(2, inst.graph.max_degree)
        radius = certify_mod.main_threshold_radius(d, inst.beta_max)
    else:
        radius = int(args.radius)
    report = certify_mod.verify_conditions(inst, radius, lm_mode=args.lm_mode)
    doc = {
        "R": report.radius, "X": report.x_value, "T": report.t_value,
        "lm_mode": report.lm_mode,
        "per_vertex": [{
            "v": p.vertex, "vol": p.volume, "lm": p.lm_value,
            "sm": int(p.sm_ok), "sum_a_u": p.sm_total,
        } for p in report.per_vertex],
    }
    if report.all_pass:
        cert = certify_mod.certified_bound(report)
        doc.update({
            "certified": True,
            "certified_continuous": cert.continuous_bound,
            "certified_gap": cert.gap_bound,
            "certified_discrete": cert.discrete_bound,
        })
        _emit(args, doc, "certify")
        return EXIT_OK
    doc["certified"] = False
    _emit(args, doc, "certify")
    sys.stderr.write("certification refused: a per-vertex condition failed\n")
    return EXIT_REFUSED


# ---------------------------------------------------------------------------
# cutwidth
# ---------------------------------------------------------------------------

def cmd_cutwidth(args) -> int:
    picked = [name for name, on in (("exact", args.exact),
                                    ("tree_bound", args.tree_bound),
                                    ("gw", args.gw is not None)) if on]
    if len(picked) != 1:
        raise ValueError("choose exactly one of --exact, --tree-bound, --gw")
    mode = picked[0]
    if mode == "gw":
        seed_val = _require_seed(args)
        gw = args.gw.split() if isinstance(args.gw, str) else args.gw
        if len(gw) != 3:
            raise ValueError("--gw needs D DEPTHS SAMPLES")
        d, depths_raw, samples = gw
        d = float(d)
        depths = [int(x) for x in depths_raw.split(",")]
        samples = int(samples)
        if len(depths) == 1:
            st = cutwidth_mod.gw_cutwidth_stats(d, depths[0], samples, seed_val)
            doc = {
                "d": d, "depth": depths[0], "samples": samples,
                "mean": float(st.values.mean()),
                "quantiles": {str(q): v for q, v in st.quantiles().items()},
                "exact_checked": len(st.exact_values),
            }
            rows = [[i, int(v), int(s)] for i, (v, s)
                    in enumerate(zip(st.values, st.sizes))]
            _emit(args, doc, "cutwidth-gw", csv_rows=rows,
                  csv_header=["sample", "cutwidth_bound", "n_vertices"])
        else:
            scan = cutwidth_mod.gw_cutwidth_scan(d, depths, samples, seed_val)
            doc = {
                "d": d, "depths": depths, "samples": samples,
                "means": {str(k): v for k, v in scan["means"].items()},
                "fit": scan["fit"], "calibrated_shift": scan["calibrated_shift"],
            }
            _emit(args, doc, "cutwidth-gw-scan")
            if args.plot and args.out:
                plots.gw_figure(depths, [scan["means"][el] for el in depths],
                                scan["fit"], os.path.splitext(args.out)[0] + ".png")
        return EXIT_OK

    _require(args, "infile")
    inst = read_instance(args.infile)
    if mode == "exact":
        res = cutwidth_mod.cutwidth_exact(inst.graph,
                                          cap=args.cap if args.cap else 20)
    else:
        res = cutwidth_mod.tree_cutwidth_ordering(inst.graph)
    doc = {"kind": res.kind, "value": res.value, "n": inst.n}
    if args.witness:
        doc["ordering"] = list(res.ordering)
    _emit(args, doc, "cutwidth")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--seed", type=int, default=None,
                    help="master seed (required for stochastic commands)")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=("csv", "json"), default="json")
    sp.add_argument("--cap", type=int, default=None,
                    help="generic size/horizon cap override")
    sp.add_argument("--config", default=None,
                    help="key = value defaults file; flags win")
    sp.add_argument("--plot", action="store_true",
                    help="render a PNG figure next to the output")


def build_parser(config: dict | None = None) -> argparse.ArgumentParser:
    """Build the CLI parser; config values become subparser defaults, so
    command-line flags always win over the config file."""
    p = argparse.ArgumentParser(prog="isinglab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    subparsers = []

    def _apply_config():
        if not config:
            return
        known = set()
        for sp in subparsers:
            dests = {a.dest for a in sp._actions}
            known |= dests
            usable = {k: v for k, v in config.items() if k in dests}
            if usable:
                sp.set_defaults(**usable)
        unknown = set(config) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")

    g = sub.add_parser("gen", help="generate an instance file")
    g.add_argument("--family", choices=FAMILIES, default=None)
    g.add_argument("--n", type=int, default=0)
    g.add_argument("--d", type=float, default=0.0)
    g.add_argument("--depth", type=int, default=0)
    g.add_argument("--rows", type=int, default=0)
    g.add_argument("--cols", type=int, default=0)
    g.add_argument("--beta", type=float, default=1.0)
    g.add_argument("--h", type=float, default=0.0)
    g.add_argument("--in", dest="infile", default=None)
    _add_common(g)
    g.set_defaults(fn=cmd_gen)

    e = sub.add_parser("exact", help="brute-force distribution and spectrum")
    e.add_argument("--in", dest="infile", default=None)
    _add_common(e)
    e.set_defaults(fn=cmd_exact)

    s = sub.add_parser("saw", help="walk-tree boundary influence bounds")
    s.add_argument("--in", dest="infile", default=None)
    s.add_argument("--center", type=int, default=None)
    s.add_argument("--radius", type=int, default=None)
    _add_common(s)
    s.set_defaults(fn=cmd_saw)

    c = sub.add_parser("couple", help="monotone coupling replicas on one instance")
    c.add_argument("--in", dest="infile", default=None)
    c.add_argument("--mode", choices=("discrete", "continuous"), default="discrete")
    c.add_argument("--replicas", type=int, default=100)
    c.add_argument("--horizon", type=float, default=None)
    _add_common(c)
    c.set_defaults(fn=cmd_couple)

    sc = sub.add_parser("scan", help="coupling-time scan over (n, beta) grids")
    sc.add_argument("--family", choices=("er", "regular", "cycle", "path", "star"),
                    default=None)
    sc.add_argument("--n-grid", default=None)
    sc.add_argument("--beta-grid", default=None)
    sc.add_argument("--d", type=float, default=3.0)
    sc.add_argument("--replicas", type=int, default=100)
    sc.add_argument("--mode", choices=("discrete", "continuous"), default="discrete")
    _add_common(sc)
    sc.set_defaults(fn=cmd_scan)

    ce = sub.add_parser("certify", help="Vol/LM/SM certificate")
    ce.add_argument("--in", dest="infile", default=None)
    ce.add_argument("--R", dest="radius", default="auto")
    ce.add_argument("--lm-mode", choices=("exact", "cutwidth_bound"), default="exact")
    _add_common(ce)
    ce.set_defaults(fn=cmd_certify)

    cw = sub.add_parser("cutwidth", help="cut-width values and GW statistics")
    cw.add_argument("--in", dest="infile", default=None)
    cw.add_argument("--exact", action="store_true")
    cw.add_argument("--tree-bound", dest="tree_bound", action="store_true")
    cw.add_argument("--gw", nargs=3, metavar=("D", "DEPTHS", "SAMPLES"), default=None)
    cw.add_argument("--witness", action="store_true")
    _add_common(cw)
    cw.set_defaults(fn=cmd_cutwidth)

    subparsers.extend([g, e, s, c, sc, ce, cw])
    _apply_config()
    return p


def _load_config(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, val = (x.strip() for x in line.split("=", 1))
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ValueError(f"bad config line: {raw.rstrip()!r}")
                key, val = parts
            key = key.replace("-", "_")
            if val.lower() in ("true", "false"):
                values[key] = val.lower() == "true"
                continue
            for cast in (int, float):
                try:
                    values[key] = cast(val)
                    break
                except ValueError:
                    continue
            else:
                values[key] = val
    return values


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # flags win over config values, which win over parser defaults
    config = None
    if "--config" in argv:
        cfg_path = argv[argv.index("--config") + 1]
        try:
            config = _load_config(cfg_path)
        except (OSError, ValueError) as exc:
            sys.stderr.write(f"error: {exc}\n")
            return EXIT_INVALID
    try:
        parser = build_parser(config)
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except CertificationRefused as exc:
        sys.stderr.write(f"certification refused: {exc}\n")
        return EXIT_REFUSED
    except SizeCapError as exc:
        sys.stderr.write(f"size cap: {exc}\n")
        return EXIT_SIZE_CAP
    except (ValueError, InstanceFormatError, OSError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
