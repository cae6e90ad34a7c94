"""Command-line interface.

Exit codes: 0 success, 2 partial result (flagged or unresolved output), 3 failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import atlas, plots
from .continuation import BifurcationEvent, branch_events
from .cycles import continue_cycles, cycle_from_hopf, detect_homoclinic, period_curve
from .dynamics import basin_map, integrate
from .equilibria import all_equilibria, classify
from .errors import MutualismError
from .model import load_config
from .serialize import read_json, write_csv, write_json

log = logging.getLogger("mutualism")

EXIT_OK = 0
EXIT_PARTIAL = 2
EXIT_FAIL = 3


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} values, got {len(vals)}")
    return vals


def _ints(text: str, n: int) -> list[int]:
    vals = _floats(text, n)
    if any(v != int(v) or v < 1 for v in vals):
        raise argparse.ArgumentTypeError("expected positive integers")
    return [int(v) for v in vals]


def _params(args):
    p = load_config(args.config)
    sin = getattr(args, "sin", None)
    d = getattr(args, "d", None)
    if sin is not None or d is not None:
        p = p.with_operating(S_in=sin, D=d)
    return p


def _sibling(path: str | Path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


# ----------------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------------


def cmd_equilibria(args) -> int:
    p = _params(args)
    eqs = [classify(e, p) for e in all_equilibria(p)]
    write_json({"params": p.to_dict(), "equilibria": [e.to_dict() for e in eqs]}, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    p = _params(args)
    traj = integrate(args.x0, p, args.tend, tol=args.tol)
    rows = (np.concatenate([[t], y]) for t, y in zip(traj.t, traj.y))
    write_csv(["t", "S", "x1", "x2"], rows, args.out)
    if args.svg:
        svg = _trajectory_svg(traj)
        plots.write_svg(svg, args.svg)
    return EXIT_OK


def _trajectory_svg(traj) -> str:
    fig, ax = plots._new_axes("t", "state")
    for k, name in enumerate(("S", "x1", "x2")):
        ax.plot(traj.t, traj.y[:, k], label=name, lw=0.9)
    ax.legend(fontsize=7, frameon=False)
    return plots._render(fig)


def cmd_basin(args) -> int:
    p = _params(args)
    bm = basin_map(p, n=args.n, budget=args.budget, tol=args.tol)
    rows = []
    for j, b in enumerate(bm.x2):
        for i, a in enumerate(bm.x1):
            rows.append([bm.S0, a, b, bm.labels[j][i].key()])
    write_csv(["S0", "x1", "x2", "label"], rows, args.out)
    write_json({"attractors": [{"label": a.key(), "kind": a.kind, "period": a.period,
                                "state": None if a.state is None else a.state.tolist()} for a in bm.attractors]},
               _sibling(args.out, "_attractors.json"))
    if args.svg:
        plots.write_svg(plots.basin_figure(bm), args.svg)
    unresolved = any(a.kind == "unresolved" for a in bm.attractors)
    return EXIT_PARTIAL if unresolved else EXIT_OK


def cmd_branch(args) -> int:
    p = _params(args)
    lo, hi = (args.from_, args.to) if args.from_ <= args.to else (args.to, args.from_)
    br = branch_events(p, args.free, (lo, hi))
    rows = [[pt.arclength, pt.param, *pt.state, *pt.c, pt.mu, pt.nu] for pt in br.points]
    write_csv(["arclength", "param", "S", "x1", "x2", "c1", "c2", "c3", "c4", "mu", "nu"], rows, args.out)
    write_json({"events": [e.to_dict() for e in br.events], "terminated": br.terminated},
               _sibling(args.out, "_events.json"))
    if args.svg:
        plots.write_svg(plots.branch_diagram(br), args.svg)
    return EXIT_OK


def _load_hopf_seeds(path) -> list[BifurcationEvent]:
    data = read_json(path)
    if isinstance(data, dict):
        data = data.get("events", [data])
    return [BifurcationEvent.from_dict(d) for d in data if d.get("type") == "H"]


def cmd_cycles(args) -> int:
    p = _params(args)
    lo, hi = args.range
    if args.seed:
        seeds = _load_hopf_seeds(args.seed)
        br = None
    else:
        br = branch_events(p, "sin", (lo, hi))
        seeds = [e for e in br.events if e.kind == "H"]
    if not seeds:
        log.error("no Hopf point to start from")
        return EXIT_FAIL
    families, rows, events = [], [], []
    partial = False
    for k, ev in enumerate(seeds):
        q = p.with_operating(S_in=ev.S_in if ev.S_in is not None else ev.param,
                             D=ev.D if ev.D is not None else p.D)
        fam = continue_cycles(cycle_from_hopf(ev, q), range_=(lo, hi))
        fam.events.append(detect_homoclinic(fam))
        families.append(fam)
        for s in fam.samples:
            rows.append([k, *s.to_row()])
        events.extend(fam.events)
        partial |= any(e.kind in ("terminated", "Hom-unresolved") or e.diagnostics.get("approximate")
                       for e in fam.events)
    header = ["family", "param", "T", "S", "x1", "x2", "abs_mult1", "abs_mult2", "stability"]
    write_csv(header, rows, args.out)
    pcs = period_curve(families)
    write_json({"events": [e.to_dict() for e in events],
                "period_curves": [{"label": c.label, "pattern": c.stability_pattern(),
                                   "S_in": [float(v) for v in c.params], "T": [float(v) for v in c.periods]}
                                  for c in pcs]},
               _sibling(args.out, "_events.json"))
    if args.svg:
        plots.write_svg(plots.period_diagram(pcs, events), args.svg)
        plots.write_svg(plots.branch_diagram(br, families), _sibling(args.svg, "_branch.svg"))
    return EXIT_PARTIAL if partial else EXIT_OK


def _write_regions(grid: atlas.RegionGrid, path):
    rows = []
    for j, D in enumerate(grid.D):
        for i, s in enumerate(grid.S_in):
            rows.append([s, D, grid.labels[j, i], int(grid.flagged[j, i])])
    write_csv(["S_in", "D", "label", "flagged"], rows, path)


def _read_regions(path) -> atlas.RegionGrid | None:
    from .serialize import read_csv

    if not Path(path).exists():
        return None
    _, rows = read_csv(path)
    if not rows:
        return None
    S = np.array(sorted({float(r[0]) for r in rows}))
    D = np.array(sorted({float(r[1]) for r in rows}))
    labels = np.empty((len(D), len(S)), dtype=object)
    flagged = np.zeros((len(D), len(S)), dtype=bool)
    si = {v: k for k, v in enumerate(S)}
    di = {v: k for k, v in enumerate(D)}
    for r in rows:
        j, i = di[float(r[1])], si[float(r[0])]
        labels[j, i] = r[2]
        flagged[j, i] = r[3] == "1"
    return atlas.RegionGrid(S, D, labels.astype(str), flagged)


def cmd_diagram(args) -> int:
    p = load_config(args.config)
    out = Path(args.out_dir)
    res = atlas.build_atlas(p, window=tuple(args.window), grid=tuple(args.grid), n_slices=args.slices,
                            regions=not args.no_regions)
    write_json({"curves": [c.to_dict() for c in res.curves],
                "events": [e.to_dict() for sl in res.slices for e in sl.events],
                "close_pd_lpc": [list(t) for t in atlas.close_pairs(res.slices)]},
               out / "curves.json")
    write_json({"codim2": [c.to_dict() for c in res.codim2]}, out / "codim2.json")
    if res.regions is not None:
        _write_regions(res.regions, out / "regions.csv")
    plots.write_svg(plots.operating_diagram(res.curves, res.codim2, res.regions, args.window),
                    out / "diagram.svg")
    flagged = res.regions is not None and bool(res.regions.flagged.any())
    return EXIT_PARTIAL if flagged else EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.in_dir)
    out = Path(args.out_dir or args.in_dir)
    curves = [atlas.BifCurve.from_dict(d) for d in read_json(src / "curves.json")["curves"]]
    pts = []
    if (src / "codim2.json").exists():
        pts = [atlas.Codim2Point.from_dict(d) for d in read_json(src / "codim2.json")["codim2"]]
    regions = _read_regions(src / "regions.csv")
    plots.write_svg(plots.operating_diagram(curves, pts, regions, args.window), out / "diagram.svg")
    return EXIT_OK


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mutualism", description="Bifurcation analysis of a mutualism chemostat.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, operating=True):
        sp.add_argument("--config", help="TOML parameter file (defaults to the reference parameters)")
        if operating:
            sp.add_argument("--sin", type=float, help="override S_in")
            sp.add_argument("--d", type=float, help="override D")

    sp = sub.add_parser("equilibria", help="equilibria and their stability")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_equilibria)

    sp = sub.add_parser("simulate", help="integrate one trajectory")
    common(sp)
    sp.add_argument("--x0", type=lambda s: _floats(s, 3), required=True, help="S,x1,x2")
    sp.add_argument("--tend", type=float, required=True)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--out", required=True)
    sp.add_argument("--svg")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("basin", help="attractor labels over an initial-condition grid")
    common(sp)
    sp.add_argument("--n", type=int, default=21, help="grid points per axis")
    sp.add_argument("--budget", type=float, default=5000.0, help="max integration time per start")
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--out", required=True)
    sp.add_argument("--svg")
    sp.set_defaults(func=cmd_basin)

    sp = sub.add_parser("branch", help="continue the coexistence equilibrium branch")
    common(sp)
    sp.add_argument("--free", choices=["sin", "d"], default="sin")
    sp.add_argument("--from", dest="from_", type=float, required=True)
    sp.add_argument("--to", type=float, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--svg")
    sp.set_defaults(func=cmd_branch)

    sp = sub.add_parser("cycles", help="continue limit cycles born at Hopf points")
    common(sp)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--from-hopf", action="store_true", help="seed from every Hopf point in range (default)")
    g.add_argument("--seed", help="JSON with Hopf event(s), e.g. a branch events file")
    sp.add_argument("--range", type=lambda s: _floats(s, 2), default=[2.0, 4.0])
    sp.add_argument("--out", required=True)
    sp.add_argument("--svg")
    sp.set_defaults(func=cmd_cycles)

    sp = sub.add_parser("diagram", help="two-parameter operating diagram")
    common(sp, operating=False)
    sp.add_argument("--window", type=lambda s: _floats(s, 4), default=list(atlas.DEFAULT_WINDOW),
                    help="Smin,Smax,Dmin,Dmax")
    sp.add_argument("--grid", type=lambda s: _ints(s, 2), default=list(atlas.DEFAULT_GRID),
                    help="region cells nS,nD")
    sp.add_argument("--slices", type=int, default=22, help="one-parameter cycle slices across the oscillatory D band")
    sp.add_argument("--no-regions", action="store_true", help="skip the region grid")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_diagram)

    sp = sub.add_parser("report", help="re-render SVG from stored diagram output")
    sp.add_argument("--in-dir", required=True)
    sp.add_argument("--out-dir")
    sp.add_argument("--window", type=lambda s: _floats(s, 4))
    sp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MutualismError, ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
