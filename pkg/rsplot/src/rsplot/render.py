"""Render rsmimo experiment CSVs into publication-style figures.

Knows nothing about the optimizer: the input contract is the documented CSV
schemas alone.

figure kinds and required columns
---------------------------------
region: scheme, realization, weight_index, r1, r2
        one rate-region curve per scheme; rows are averaged over the
        realization column at fixed (scheme, weight_index).
esr:    scheme, snr_db, realization, esr
        ESR-versus-SNR curves with the fitted high-SNR slope annotated.
lls:    scheme, snr_db, realization, throughput, shannon_bound
        throughput curves per scheme plus the Shannon-bound envelope.

Invoked as `render --kind region|esr|lls --in <csv> --out <img>`.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

REQUIRED = {
    "region": ("scheme", "realization", "weight_index", "r1", "r2"),
    "esr": ("scheme", "snr_db", "realization", "esr"),
    "lls": ("scheme", "snr_db", "realization", "throughput", "shannon_bound"),
}

LABELS = {"rs": "RS", "rs1": "RS (1 common stream)", "mumimo": "MU-MIMO",
          "noma": "MIMO NOMA"}


class SchemaError(ValueError):
    """The CSV does not match the documented schema."""


def read_rows(path: str | Path, kind: str) -> list[dict]:
    if kind not in REQUIRED:
        raise SchemaError(f"unknown figure kind {kind!r}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in REQUIRED[kind] if c not in header]
        if missing:
            raise SchemaError(f"missing column(s): {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise SchemaError("CSV contains no data rows")
    return rows


def _group_mean(rows, keys, value):
    """Mean of `value` grouped by the tuple of `keys`, insertion-ordered."""
    acc: dict = {}
    for r in rows:
        key = tuple(r[k] for k in keys)
        acc.setdefault(key, []).append(float(r[value]))
    return {k: float(np.mean(v)) for k, v in acc.items()}


def _schemes(rows):
    seen = []
    for r in rows:
        if r["scheme"] not in seen:
            seen.append(r["scheme"])
    return seen


def region_series(rows):
    """Per scheme: (r1, r2) boundary points averaged over realizations,
    ordered by weight index."""
    out = {}
    for scheme in _schemes(rows):
        sub = [r for r in rows if r["scheme"] == scheme]
        widx = sorted({int(r["weight_index"]) for r in sub})
        m1 = _group_mean(sub, ("weight_index",), "r1")
        m2 = _group_mean(sub, ("weight_index",), "r2")
        x = np.array([m1[(str(w),)] for w in widx])
        y = np.array([m2[(str(w),)] for w in widx])
        out[scheme] = (x, y)
    return out


def sweep_series(rows, value):
    """Per scheme: (snr_db, mean value) sorted by SNR."""
    out = {}
    for scheme in _schemes(rows):
        sub = [r for r in rows if r["scheme"] == scheme]
        snrs = sorted({float(r["snr_db"]) for r in sub})
        m = _group_mean(sub, ("snr_db",), value)
        y = np.array([m[(k,)] for k in
                      [next(r["snr_db"] for r in sub
                            if float(r["snr_db"]) == s) for s in snrs]])
        out[scheme] = (np.array(snrs), y)
    return out


def _slope(x_snr_db, y):
    if x_snr_db.size < 2:
        return float("nan")
    logp = np.log2(10.0 ** (x_snr_db / 10.0))
    return float(np.polyfit(logp, y, 1)[0])


def render(kind: str, csv_path: str | Path, out_path: str | Path):
    """Build the figure, write the image, return the plotted series.

    The returned dict maps a series label to its (x, y) arrays exactly as
    drawn, so callers can verify the rendering against the CSV.
    """
    rows = read_rows(csv_path, kind)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    series = {}
    if kind == "region":
        for scheme, (x, y) in region_series(rows).items():
            order = np.argsort(x)
            ax.plot(x[order], y[order], marker="o", ms=3,
                    label=LABELS.get(scheme, scheme))
            series[scheme] = (x, y)
        ax.set_xlabel("user-1 ergodic rate [bps/Hz]")
        ax.set_ylabel("user-2 ergodic rate [bps/Hz]")
        ax.set_title("Rate region")
    elif kind == "esr":
        for scheme, (x, y) in sweep_series(rows, "esr").items():
            d = _slope(x, y)
            label = LABELS.get(scheme, scheme)
            if np.isfinite(d):
                label += f" (slope {d:.2f})"
            ax.plot(x, y, marker="s", ms=4, label=label)
            series[scheme] = (x, y)
        ax.set_xlabel("SNR [dB]")
        ax.set_ylabel("ergodic sum rate [bps/Hz]")
        ax.set_title("ESR versus SNR")
    else:  # lls
        data = sweep_series(rows, "throughput")
        bound = sweep_series(rows, "shannon_bound")
        for scheme, (x, y) in data.items():
            ax.plot(x, y, marker="o", ms=4,
                    label=f"{LABELS.get(scheme, scheme)} throughput")
            series[scheme] = (x, y)
        for scheme, (x, y) in bound.items():
            ax.plot(x, y, ls="--", alpha=0.7,
                    label=f"{LABELS.get(scheme, scheme)} Shannon bound")
            series[f"{scheme}:bound"] = (x, y)
        ax.set_xlabel("SNR [dB]")
        ax.set_ylabel("throughput [bps/Hz]")
        ax.set_title("Throughput versus SNR")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return series


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="render", description="Render rsmimo experiment CSVs")
    ap.add_argument("--kind", required=True, choices=sorted(REQUIRED))
    ap.add_argument("--in", dest="csv_path", required=True)
    ap.add_argument("--out", dest="out_path", required=True)
    args = ap.parse_args(argv)
    try:
        series = render(args.kind, args.csv_path, args.out_path)
    except (SchemaError, OSError) as exc:
        print("ERROR " + json.dumps({"error": type(exc).__name__,
                                     "message": str(exc)}), file=sys.stderr)
        return 2
    print(f"wrote {args.out_path} ({len(series)} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
