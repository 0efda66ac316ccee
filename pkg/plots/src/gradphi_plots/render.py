"""Render publication-style figures from grad-phi CSV outputs.

Rendering never recomputes statistics: every number on a figure comes from
the CSV (columns or '#' metadata lines). Output is deterministic: fixed
styles, no timestamps in the image metadata.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FigureSpec", "render", "read_csv", "SchemaError"]

KINDS = ("tv_curves", "gap_decay", "cutoff_profile", "equilibrium_hist")

STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
}


class SchemaError(ValueError):
    pass


@dataclass
class FigureSpec:
    kind: str
    inputs: list
    output: str
    logx: bool = False
    logy: bool = False

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise SchemaError(f"figure kind must be one of {KINDS}, got {self.kind!r}")
        if not self.inputs:
            raise SchemaError("at least one input CSV is required")


def read_csv(path):
    """Read a grad-phi CSV: '#' metadata lines, header row, float rows."""
    meta, names, rows = {}, None, []
    text = Path(path).read_text()
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
        elif names is None:
            names = line.split(",")
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    if names is None or not rows:
        raise SchemaError(f"{path}: empty CSV, nothing to plot")
    data = np.asarray(rows, dtype=float)
    return meta, {name: data[:, i] for i, name in enumerate(names)}


def _need(cols: dict, names: list, path) -> None:
    missing = [n for n in names if n not in cols]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}; found {list(cols)}")


def _finish(fig, spec: FigureSpec) -> None:
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"Software": "grad-phi-plot"}
    if out.suffix == ".svg":
        meta["Date"] = None          # svg would otherwise embed a timestamp
    fig.savefig(out, metadata=meta)
    plt.close(fig)


def _plot_tv_curves(spec: FigureSpec):
    meta, cols = read_csv(spec.inputs[0])
    _need(cols, ["time", "lower", "lower_stderr", "upper", "upper_stderr"],
          spec.inputs[0])
    n = int(float(meta["N"]))
    marker = math.log(n) / (2.0 * (1.0 - math.cos(math.pi / n)))

    fig, ax = plt.subplots()
    for name, se_name, color in (("lower", "lower_stderr", "tab:blue"),
                                 ("upper", "upper_stderr", "tab:red")):
        mask = ~np.isnan(cols[name])
        t = cols["time"][mask]
        v = cols[name][mask]
        se = cols[se_name][mask]
        ax.plot(t, v, color=color, label=f"{name} bound")
        ax.fill_between(t, v - 3 * se, v + 3 * se, color=color, alpha=0.2)
    ax.axvline(marker, color="k", linestyle="--", linewidth=1,
               label=f"log N / (2 gap) = {marker:.1f}")
    ax.set_xlabel("time")
    ax.set_ylabel("distance to equilibrium")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"N = {n}, potential = {meta.get('potential', '?')}")
    ax.legend(loc="upper right")
    if spec.logx:
        ax.set_xscale("log")
    _finish(fig, spec)
    return marker


def _plot_gap_decay(spec: FigureSpec):
    meta, cols = read_csv(spec.inputs[0])
    _need(cols, ["time", "abs_mean", "stderr", "fit"], spec.inputs[0])
    fig, ax = plt.subplots()
    ax.errorbar(cols["time"], cols["abs_mean"], yerr=3 * cols["stderr"],
                fmt="o", markersize=3, color="tab:blue", label="replica mean")
    ax.plot(cols["time"], cols["fit"], color="tab:orange",
            label=f"fit rate = {float(meta.get('rate', 'nan')):.5g}"
                  f" (theory {float(meta.get('gap_theory', 'nan')):.5g})")
    ax.set_yscale("log")
    if spec.logx:
        ax.set_xscale("log")
    ax.set_xlabel("time")
    ax.set_ylabel("|mean slow-mode statistic|")
    ax.set_title(f"N = {meta.get('N', '?')}, potential = {meta.get('potential', '?')}")
    ax.legend()
    _finish(fig, spec)


def _plot_cutoff_profile(spec: FigureSpec):
    meta, cols = read_csv(spec.inputs[0])
    _need(cols, ["N", "eps", "t_lo", "t_hi", "t_mid", "ratio"], spec.inputs[0])
    fig, ax = plt.subplots()
    for eps in sorted(set(cols["eps"])):
        sel = cols["eps"] == eps
        n_vals = cols["N"][sel]
        norm = n_vals**2 * np.log(n_vals) / math.pi**2
        lo = cols["t_lo"][sel] / norm
        hi = cols["t_hi"][sel] / norm
        mid = cols["ratio"][sel]
        ax.errorbar(n_vals, mid, yerr=[mid - lo, hi - mid], fmt="o-",
                    capsize=4, label=f"eps = {eps:g}")
    ax.axhline(1.0, color="k", linewidth=1, linestyle="--")
    ax.set_xscale("log", base=2)
    if spec.logy:
        ax.set_yscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("mixing time x pi^2 / (N^2 log N)")
    ax.set_title(f"potential = {meta.get('potential', '?')}")
    ax.legend()
    _finish(fig, spec)


def _plot_equilibrium_hist(spec: FigureSpec):
    meta, cols = read_csv(spec.inputs[0])
    _need(cols, ["source", "value"], spec.inputs[0])
    labels = dict(tok.split("=") for tok in meta.get("sources", "").split(";")
                  if "=" in tok)
    fig, ax = plt.subplots()
    all_vals = cols["value"]
    edges = np.linspace(all_vals.min(), all_vals.max(), 61)
    for sid in sorted(set(cols["source"])):
        sel = cols["source"] == sid
        ax.hist(cols["value"][sel], bins=edges, density=True, alpha=0.5,
                label=labels.get(str(int(sid)), f"source {int(sid)}"))
    ax.set_xlabel(f"height at site {meta.get('site', '?')}")
    ax.set_ylabel("density")
    ax.set_title(f"N = {meta.get('N', '?')}, potential = {meta.get('potential', '?')}")
    ax.legend()
    if spec.logy:
        ax.set_yscale("log")
    _finish(fig, spec)


def render(spec: FigureSpec):
    """Render one figure; returns the tv_curves marker position when drawn."""
    spec.validate()
    with plt.rc_context(STYLE):
        if spec.kind == "tv_curves":
            return _plot_tv_curves(spec)
        if spec.kind == "gap_decay":
            return _plot_gap_decay(spec)
        if spec.kind == "cutoff_profile":
            return _plot_cutoff_profile(spec)
        return _plot_equilibrium_hist(spec)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="grad-phi-plot",
        description="Render figures from grad-phi experiment CSVs")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--input", action="append", required=True,
                        help="input CSV (repeatable)")
    parser.add_argument("--output", required=True, help="image file to write")
    parser.add_argument("--logx", action="store_true")
    parser.add_argument("--logy", action="store_true")
    args = parser.parse_args(argv)
    spec = FigureSpec(args.kind, args.input, args.output,
                      logx=args.logx, logy=args.logy)
    try:
        render(spec)
    except (SchemaError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {spec.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
