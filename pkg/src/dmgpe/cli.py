"""Command line entry point.

    dmgpe run --config exp.cfg --out results/
    dmgpe revival-table --preset ci --jobs 4 --out table/
    dmgpe oracle

Exit codes: 0 success, 2 configuration error, 3 numerical failure (blowup,
non-convergence, failed oracle), 4 detection or extraction failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import KINDS, build_config, defaults
from .errors import ConfigurationError, ConvergenceError, DetectionError, NumericalBlowupError
from .experiments import run_experiment
from .io import env_overrides, read_config

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DETECT = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes for sweeps and tables")
    common.add_argument("--preset", choices=("paper", "ci", "compact"), help="grid preset")
    common.add_argument("--heatmaps", action="store_true", help="write grayscale density PNGs")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dmgpe", description="Dispersion-managed 2D GPE simulations.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the experiment a config file describes")
    for kind in KINDS:
        sub.add_parser(kind, parents=[common], help=f"run a {kind} experiment")
    return p


def _parse_sets(items):
    from .io import parse_config_text

    try:
        return parse_config_text("\n".join(items))
    except ConfigurationError as e:
        raise ConfigurationError(f"bad --set value: {e}") from None


def load(args) -> "ExperimentConfig":  # noqa: F821
    """Merge defaults, config file, environment and flags (later wins)."""
    if args.command == "run":
        if not args.config:
            raise ConfigurationError("run needs --config", ["--config"])
        values = read_config(args.config)
        strict = True
    else:
        values = defaults(args.command)
        if args.config:
            values.update(read_config(args.config))
        values["experiment.kind"] = args.command
        strict = False
    over = env_overrides()
    over.update(_parse_sets(args.set))
    if args.preset:
        over["grid.preset"] = args.preset
    if args.out:
        over["output.dir"] = args.out
    if args.heatmaps:
        over["output.heatmaps"] = True
    return build_config(values, strict=strict, overrides=over)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args)
        summary = run_experiment(cfg, cfg.raw["output.dir"], jobs=max(1, args.jobs))
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        if e.fields:
            print("fields: " + ", ".join(e.fields), file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowupError as e:
        print(f"numerical failure at step {e.step}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConvergenceError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DetectionError as e:
        print(f"detection failure: {e}", file=sys.stderr)
        return EXIT_DETECT
    _report(cfg.kind, summary)
    if cfg.kind == "oracle" and not summary["all_passed"]:
        return EXIT_NUMERIC
    return EXIT_OK


def _report(kind, s):
    if kind == "oracle":
        for c in s["_checks"]:
            print(c.line())
        return
    if kind == "revival-table":
        eps = s["eccentricities"]
        print(f"revival times ({s['time_convention']} ms convention)")
        print("row        " + "".join(f"{'eps=' + format(e, 'g'):>12}" for e in eps))
        for label, vals in s["rows_ms"].items():
            print(f"{label:<11}" + "".join(f"{v:12.2f}" for v in vals))
        return
    if kind == "sweep-beta":
        for e, r in s["sweeps"].items():
            print(f"eps={e}: beta_c={r['beta_c']:.4f} (1-eps^2={r['beta_theory']:.4f}) "
                  f"lambda_max={r['lambda_max']:.4f}")
        return
    from .experiments import _public

    print(json.dumps(_public(s), indent=2, sort_keys=True, default=str))


if __name__ == "__main__":
    sys.exit(main())
