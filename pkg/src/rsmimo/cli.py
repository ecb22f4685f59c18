"""Command line front end.

    rsmimo rate-region --snr-db 20 --alpha perfect --realizations 10 --out region.csv
    rsmimo esr-sweep   --snr-db 20:35:5 --alpha 0.6 --out esr.csv
    rsmimo dof         --alpha 0.6 --qc 2
    rsmimo lls         --snr-db 10:30:5 --alpha 0.6 --out lls.csv

Every SystemConfig field can come from a key/value config file (--config)
and/or be overridden by a flag.  Exit code 0 on success; failures print one
machine-readable line `ERROR {json}` to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import (PERFECT, SystemConfig, default_private_split,
                     load_config, parse_config_text)
from .experiments import ExperimentSpec, run_experiment

KIND_BY_COMMAND = {
    "rate-region": "rate-region",
    "esr-sweep": "esr-sweep",
    "dof": "dof-table",
    "lls": "lls-sweep",
}


def parse_snr_grid(text: str) -> tuple[float, ...]:
    """'a:b:step' inclusive grid, or a comma-separated list, or one value."""
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError("expected --snr-db a:b:step with step > 0")
        a, b, step = parts
        out = []
        x = a
        while x <= b + 1e-9:
            out.append(round(x, 9))
            x += step
        return tuple(out)
    return tuple(float(p) for p in text.split(","))


def parse_alpha(text: str):
    return PERFECT if text.lower() == PERFECT else float(text)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rsmimo",
        description="Rate-splitting precoder optimization and evaluation")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in KIND_BY_COMMAND:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key/value config file")
        p.add_argument("--m", type=int, help="transmit antennas")
        p.add_argument("--q", type=int, help="receive antennas per user")
        p.add_argument("--k", type=int, help="users")
        p.add_argument("--qc", type=int, help="common streams (0 disables RS)")
        p.add_argument("--qk", type=_int_list, help="private streams, comma list")
        p.add_argument("--sigma-k2", type=_float_list,
                       help="per-user channel variances, comma list")
        p.add_argument("--sigma-n2", type=float, help="noise variance")
        p.add_argument("--alpha", type=parse_alpha,
                       help="CSIT exponent in [0,1] or 'perfect'")
        p.add_argument("--snr-db", type=parse_snr_grid, default=(20.0,),
                       help="SNR grid: a:b:step, comma list, or one value")
        p.add_argument("--scheme", default="rs,mumimo,noma",
                       help="comma subset of rs,rs1,mumimo,noma")
        p.add_argument("--realizations", type=int, default=10)
        p.add_argument("--samples", type=int, help="SAA samples per estimate")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output CSV path")
        p.add_argument("--full-scale", action="store_true",
                       help="paper-scale run: 100 realizations, 1000 samples")
    return ap


def config_from_args(args) -> SystemConfig:
    overrides = {
        "M": args.m, "Q": args.q, "K": args.k, "Qc": args.qc, "Qk": args.qk,
        "alpha": args.alpha, "sigma_k2": args.sigma_k2,
        "sigma_n2": args.sigma_n2, "N": args.samples, "seed": args.seed,
        "Pt": 10.0 ** (args.snr_db[0] / 10.0),
    }
    if args.config:
        return load_config(args.config, **overrides)
    M = overrides["M"] if overrides["M"] is not None else 4
    Q = overrides["Q"] if overrides["Q"] is not None else 2
    K = overrides["K"] if overrides["K"] is not None else 2
    fields = {
        "M": M, "Q": Q, "K": K,
        "Qc": overrides["Qc"] if overrides["Qc"] is not None else min(M, Q),
        "Qk": overrides["Qk"] or default_private_split(M, Q, K),
        "Pt": overrides["Pt"],
        "alpha": overrides["alpha"] if overrides["alpha"] is not None else 0.6,
        "sigma_k2": overrides["sigma_k2"] or tuple(1.0 for _ in range(K)),
        "sigma_n2": overrides["sigma_n2"] or 1.0,
        "N": overrides["N"] if overrides["N"] is not None else 100,
        "seed": overrides["seed"],
    }
    return SystemConfig(**fields)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
        realizations = 100 if args.full_scale else args.realizations
        if args.full_scale:
            config = config.replace(N=1000)
        kind = KIND_BY_COMMAND[args.command]
        out = args.out or f"{kind}.csv"
        spec = ExperimentSpec(
            kind=kind, config=config,
            schemes=tuple(args.scheme.split(",")),
            snr_db=tuple(args.snr_db), realizations=realizations,
            seed=args.seed, out=out)
        rows = run_experiment(spec)
    except (ValueError, OSError) as exc:
        print("ERROR " + json.dumps({"error": type(exc).__name__,
                                     "message": str(exc)}), file=sys.stderr)
        return 2
    print(f"wrote {len(rows)} rows to {spec.out}")
    if kind == "dof-table":
        for r in rows:
            print(f"  {r['scheme']:8s} Qc={r['qc']} alpha={r['alpha']}: "
                  f"dof = {r['dof']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
