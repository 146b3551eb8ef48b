"""Deterministic matplotlib renderings of the experiment CSV artifacts.

Each emitter keys off the CSV column layout, so ``emit_plots`` can be
pointed at any artifact produced by the experiment harness.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .histograms import load_joint_csv  # noqa: E402


def _read_csv(path):
    header, rows = [], []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            header = next(csv.reader([line]))
            break
        rows = list(csv.reader(fh))
    return header, rows


def _column(rows, header, name, cast=float):
    k = header.index(name)
    return [cast(r[k]) for r in rows]


def _save(fig, out):
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return Path(out)


def plot_asymmetry(path, out):
    header, rows = _read_csv(path)
    estimators = _column(rows, header, "estimator", str)
    fig, ax = plt.subplots(figsize=(6, 4))
    for est in sorted(set(estimators)):
        sub = [r for r in rows if r[header.index("estimator")] == est]
        sigmas = sorted({float(r[header.index("sigma")]) for r in sub})
        for sigma in sigmas:
            pts = [(float(r[header.index("alpha")]),
                    float(r[header.index("asymmetry")]))
                   for r in sub if float(r[header.index("sigma")]) == sigma]
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    label=f"{est} sigma={sigma:g}")
    ax.set_xlabel("integration scale alpha")
    ax.set_ylabel("optimum-offset asymmetry (voxels)")
    ax.legend(fontsize=7)
    return _save(fig, out)


def plot_scales(path, out):
    header, rows = _read_csv(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    keyed = {}
    for r in rows:
        key = (r[header.index("estimator")], float(r[header.index("sigma")]),
               float(r[header.index("beta")]), float(r[header.index("alpha")]))
        keyed.setdefault(key, []).append((float(r[header.index("offset")]),
                                          float(r[header.index("value")])))
    for (est, sigma, beta, alpha), pts in sorted(keyed.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=0.8,
                label=f"{est} s={sigma:g} b={beta:g} a={alpha:g}")
    ax.set_xlabel("translation offset (voxels)")
    ax.set_ylabel("similarity")
    ax.legend(fontsize=5, ncol=2)
    return _save(fig, out)


def plot_joint(path, out):
    _, joint = load_joint_csv(path)
    mass = joint / joint.sum() if joint.sum() > 0 else joint
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(np.log(mass + 1e-12), origin="lower", cmap="viridis")
    fig.colorbar(im, ax=ax, label="log mass")
    ax.set_xlabel("fixed-image bin")
    ax.set_ylabel("moving-image bin")
    return _save(fig, out)


def plot_generic(path, out):
    header, rows = _read_csv(path)
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in header:
        try:
            ax.plot(x, _column(rows, header, name), marker=".", label=name)
        except ValueError:
            continue
    ax.set_xlabel("row")
    ax.legend(fontsize=7)
    return _save(fig, out)


def emit_plots(path, outdir) -> list:
    """Render a CSV artifact (or a directory of them) to PNG files."""
    path = Path(path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if path.is_dir():
        produced = []
        for child in sorted(path.glob("*.csv")):
            produced.extend(emit_plots(child, outdir))
        return produced
    out = outdir / (path.stem + ".png")
    if path.name.startswith("joint_"):
        if "diff" in path.name:
            return []
        return [plot_joint(path, out)]
    header, _ = _read_csv(path)
    if "asymmetry" in header:
        return [plot_asymmetry(path, out)]
    if "offset" in header and "value" in header:
        return [plot_scales(path, out)]
    return [plot_generic(path, out)]
