"""Command line entry points: run a scenario, run the property suite,
inspect a checkpoint.

Exit codes: 0 ok, 2 invariant violation, 3 non-convergence at t_max.
The output root defaults to ./runs and can be overridden with HYMFLOW_OUT.
"""

import argparse
import json
import sys

import numpy as np


def main(argv=None):
    p = argparse.ArgumentParser(prog="hymflow")
    sub = p.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario config (TOML)")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output root (or HYMFLOW_OUT)")

    p_props = sub.add_parser("props", help="randomized property suite")
    p_props.add_argument("--seed", type=int, default=0)
    p_props.add_argument("--scale", type=float, default=1.0,
                         help="multiplier on all battery sizes")

    p_insp = sub.add_parser("inspect", help="describe a checkpoint file")
    p_insp.add_argument("checkpoint")

    args = p.parse_args(argv)

    if args.command == "run":
        from .harness import load_config, run_scenario, ConfigError
        try:
            cfg = load_config(args.config)
        except ConfigError as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        try:
            summary, code = run_scenario(cfg, out_root=args.out)
        except ConfigError as e:
            print(f"scenario invalid: {e}", file=sys.stderr)
            return 2
        print(json.dumps(summary, indent=2, sort_keys=True))
        return code

    if args.command == "props":
        from .harness import run_property_suite
        sizes = None
        if args.scale != 1.0:
            base = {"trace_bound": 10000, "leq_axioms": 2000, "shatz": 10000,
                    "phi_monotone": 10000, "norm_equiv": 1000,
                    "sigma_symmetry": 2000, "distinguish": 2000}
            sizes = {k: max(10, int(v * args.scale)) for k, v in base.items()}
        report = run_property_suite(seed=args.seed, sizes=sizes)
        return 0 if report["passed"] else 2

    if args.command == "inspect":
        from .checkpoint import load_field
        arr, header = load_field(args.checkpoint)
        print(json.dumps(header, indent=2, sort_keys=True))
        flat = arr.reshape(-1, *arr.shape[-2:]) if arr.ndim >= 2 else arr.reshape(-1, 1, 1)
        print(f"entries: {arr.size}  |max|: {np.abs(arr).max():.6e}")
        if header.get("kind") == "metric":
            w = np.linalg.eigvalsh(0.5 * (flat + np.conj(np.swapaxes(flat, -1, -2))))
            print(f"metric eigenvalue range: [{w.min():.6e}, {w.max():.6e}]"
                  f"  positive: {bool(w.min() > 0)}")
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
