"""SVG figures: operating diagram, one-parameter diagrams and period curves.

Output is byte-reproducible: Agg backend, fixed SVG hash salt, no date stamp.
"""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CURVE_COLORS = {"LP": "blue", "H": "red", "LPC": "green", "PD": "cyan", "Hom": "black"}
STABLE_COLOR = "red"
UNSTABLE_COLOR = "blue"
EVENT_MARKERS = {"LP": "s", "H": "o", "LPC": "^", "PD": "D", "Hom": "x"}

_RC = {
    "svg.hashsalt": "mutualism",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.linewidth": 0.8,
    "lines.linewidth": 1.2,
    "figure.figsize": (5.5, 4.0),
}


def _render(fig) -> str:
    buf = io.StringIO()
    with plt.rc_context(_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def _new_axes(xlabel, ylabel, title=None):
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    return fig, ax


def _runs(mask):
    """(start, stop) index pairs of maximal constant runs of a boolean array."""
    mask = np.asarray(mask, dtype=bool)
    if len(mask) == 0:
        return []
    cut = np.nonzero(mask[1:] != mask[:-1])[0] + 1
    edges = np.concatenate([[0], cut, [len(mask)]])
    return [(int(a), int(b), bool(mask[a])) for a, b in zip(edges[:-1], edges[1:])]


def operating_diagram(curves=(), codim2=(), regions=None, window=None) -> str:
    """Bifurcation curves in the (S_in, D) plane, coloured by type."""
    fig, ax = _new_axes(r"$S_{in}$", r"$D$", "Operating diagram")
    if regions is not None:
        labels = np.asarray(regions.labels)
        names = sorted(set(labels.ravel().tolist()))
        code = np.vectorize({n: k for k, n in enumerate(names)}.get)(labels) if labels.size else labels
        if labels.size:
            S, D = np.asarray(regions.S_in), np.asarray(regions.D)
            hs = 0.5 * (S[1] - S[0]) if len(S) > 1 else 0.5
            hd = 0.5 * (D[1] - D[0]) if len(D) > 1 else 0.5
            # embedded raster keeps large grids small on disk
            ax.imshow(code.astype(float), origin="lower", aspect="auto", cmap="Greys", alpha=0.25,
                      interpolation="nearest", vmin=0, vmax=max(len(names) - 1, 1),
                      extent=(S[0] - hs, S[-1] + hs, D[0] - hd, D[-1] + hd))
    seen = set()
    for c in curves:
        if len(c) == 0:
            continue
        kw = {"color": CURVE_COLORS.get(c.kind, "gray")}
        if c.kind not in seen:
            kw["label"] = c.kind
            seen.add(c.kind)
        if c.kind in ("LPC", "PD", "Hom"):
            ax.plot(c.S_in, c.D, marker=".", ms=2.5, ls="-" if c.kind != "Hom" else ":", **kw)
        else:
            ax.plot(c.S_in, c.D, **kw)
    for pt in codim2:
        ax.plot(pt.S_in, pt.D, "k*", ms=6)
        ax.annotate(pt.kind + ("*" if pt.proxy else ""), (pt.S_in, pt.D), xytext=(3, 3),
                    textcoords="offset points", fontsize=7)
    if window is not None:
        ax.set_xlim(window[0], window[1])
        ax.set_ylim(window[2], window[3])
    if seen:
        ax.legend(loc="upper left", fontsize=7, frameon=False)
    return _render(fig)


def branch_diagram(branch=None, families=(), component: int = 1, title=None) -> str:
    """One-parameter diagram: equilibrium branch and cycle-family extrema."""
    xlab = r"$S_{in}$" if branch is None or branch.free == "sin" else r"$D$"
    names = ["S", "x_1", "x_2"]
    fig, ax = _new_axes(xlab, f"${names[component]}$", title)
    if branch is not None and branch.points:
        par = branch.params()
        y = branch.states()[:, component]
        stable = np.array([pt.stable for pt in branch.points])
        for a, b, s in _runs(stable):
            ax.plot(par[max(a - 1, 0):b], y[max(a - 1, 0):b], color=STABLE_COLOR if s else UNSTABLE_COLOR,
                    ls="-" if s else "--")
        for e in branch.events:
            if e.kind in EVENT_MARKERS:
                ax.plot(e.param, e.state[component], EVENT_MARKERS[e.kind], color="k", ms=4, mfc="none")
    for fam in families:
        if not fam.samples:
            continue
        par = np.array([s.param for s in fam.samples])
        hi = np.array([s.hi[component] if s.hi is not None else np.nan for s in fam.samples])
        lo = np.array([s.lo[component] if s.lo is not None else np.nan for s in fam.samples])
        stable = np.array([s.stability == "stable" for s in fam.samples])
        for a, b, s in _runs(stable):
            sl = slice(max(a - 1, 0), b)
            col = STABLE_COLOR if s else UNSTABLE_COLOR
            ax.plot(par[sl], hi[sl], color=col, lw=0.9, ls="-" if s else "--")
            ax.plot(par[sl], lo[sl], color=col, lw=0.9, ls="-" if s else "--")
        for e in fam.events:
            if e.kind in ("LPC", "PD"):
                ax.axvline(e.param, color=CURVE_COLORS[e.kind], lw=0.5, ls=":")
    return _render(fig)


def period_diagram(curves=(), events=(), title=None) -> str:
    """Period T against the free parameter, one line per labelled cycle piece."""
    fig, ax = _new_axes(r"$S_{in}$", r"$T$", title)
    for pc in curves:
        par = np.asarray(pc.params)
        T = np.asarray(pc.periods)
        stable = np.array([s == "stable" for s in pc.stability])
        for a, b, s in _runs(stable):
            sl = slice(max(a - 1, 0), b)
            ax.plot(par[sl], T[sl], color=STABLE_COLOR if s else UNSTABLE_COLOR, ls="-" if s else "--")
        if len(par):
            k = int(np.argmin(T))
            ax.annotate(pc.label, (par[k], T[k]), xytext=(2, -9), textcoords="offset points", fontsize=7)
    for e in events:
        if e.kind == "Hom":
            ax.axvline(e.param, color=CURVE_COLORS["Hom"], lw=0.6, ls=":")
        elif e.kind in ("LPC", "PD") and "T" in e.diagnostics:
            ax.plot(e.param, e.diagnostics["T"], EVENT_MARKERS[e.kind], color=CURVE_COLORS[e.kind], ms=4)
    return _render(fig)


def basin_figure(bmap) -> str:
    """Attractor index per initial condition."""
    fig, ax = _new_axes(r"$x_1(0)$", r"$x_2(0)$", f"Basins at S(0) = {bmap.S0:.4g}")
    if bmap.codes is not None and bmap.codes.size:
        n = max(len(bmap.attractors), 1)
        mesh = ax.pcolormesh(bmap.x1, bmap.x2, bmap.codes, cmap="viridis", vmin=0, vmax=max(n - 1, 1),
                             shading="nearest")
        cb = fig.colorbar(mesh, ax=ax, ticks=range(n))
        cb.ax.set_yticklabels(bmap.distinct(), fontsize=7)
    return _render(fig)


def write_svg(svg: str, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding="utf-8")
    return path
