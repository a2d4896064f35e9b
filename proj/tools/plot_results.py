#!/usr/bin/env python3
"""Plot maxent-smc outputs.

  plot_results.py trace   OUT_DIR/trace.csv        [--save fig.png]
  plot_results.py posterior OUT_DIR/histograms.json [--samples OUT_DIR/samples.csv] [--save fig.png]

trace: misfit and drift norms against n (log-log) and the lambda paths.
posterior: marginal histograms of the diagonal coordinates with the 99%
interval and the generating value when known; optional chain traces.
"""

import argparse
import json

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def read_csv(path):
    return pd.read_csv(path, comment="#")


def plot_trace(args):
    t = read_csv(args.path)
    lam = [c for c in t.columns if c.startswith("lambda_")]
    fig, (a, b) = plt.subplots(1, 2, figsize=(11, 4))
    a.loglog(t["n"], t["drift_norm"], lw=0.5, alpha=0.5, label="drift (estimated)")
    misfit = t.dropna(subset=["misfit_norm"])
    if len(misfit):
        a.loglog(misfit["n"], misfit["misfit_norm"], label="misfit (exact)")
    a.set_xlabel("iteration n")
    a.set_ylabel("sup norm")
    a.legend()
    for c in lam:
        b.plot(t["n"], t[c], lw=0.8, label=c)
    b.set_xscale("log")
    b.set_xlabel("iteration n")
    b.set_ylabel("lambda")
    if len(lam) <= 10:
        b.legend(fontsize="small")
    return fig


def plot_posterior(args):
    h = json.load(open(args.path))
    s = h["summary"]
    marg = s["marginals"]
    rows = 2 if args.samples else 1
    fig, axes = plt.subplots(rows, len(marg), figsize=(4 * len(marg), 3.5 * rows), squeeze=False)
    truth = h.get("truth_lambda")
    for k, m in enumerate(marg):
        ax = axes[0][k]
        counts = np.asarray(m["counts"], dtype=float)
        edges = np.linspace(m["low"], m["high"], len(counts) + 1)
        ax.stairs(counts / counts.sum() / np.diff(edges), edges, fill=True, alpha=0.6)
        lo, hi = s["intervals"][m["index"]]
        ax.axvspan(lo, hi, color="grey", alpha=0.15, label="99% interval")
        if truth is not None:
            ax.axvline(truth[m["index"]], color="k", ls="--", label="truth")
        ax.set_title(m["coordinate"])
        ax.legend(fontsize="small")
    if args.samples:
        t = read_csv(args.samples)
        for k, m in enumerate(marg):
            axes[1][k].plot(t["n"], t[f"lambda_{m['index'] + 1}"], lw=0.4)
            axes[1][k].set_xlabel("step n")
    return fig


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("kind", choices=["trace", "posterior"])
    p.add_argument("path")
    p.add_argument("--samples")
    p.add_argument("--save")
    args = p.parse_args()
    fig = plot_trace(args) if args.kind == "trace" else plot_posterior(args)
    fig.tight_layout()
    if args.save:
        fig.savefig(args.save, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
