"""Command-line driver for the sampling studies and inference experiments.

Subcommands:
  sample-prior    joint prior sampling studies (shared lattice and mixed dims)
  factor-compare  principal-root vs Cholesky whitening on a 1-D domain
  monod           fixed-correlation posterior scans and full MCMC on the
                  two-parameter saturation model
  cokrige         linear two-field study with exact Gibbs field updates
  darcy           nonlinear groundwater study in reduced coordinates
  verify          structural property suite

Every run writes manifest.json (config snapshot, seed, version) so it can be
replayed exactly, plus timings.json with wall-clock stage times.

Exit codes: 0 success, 1 unexpected error, 2 configuration error,
3 forward-model/shape error, 4 numerical failure (including failed verify).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import cokrige, darcy, factor_compare, monod, sample_prior, verify
from .experiments.configs import (CokrigeConfig, ConfigError, DarcyConfig,
                                  FactorCompareConfig, MonodConfig,
                                  SamplePriorConfig, VerifyConfig, apply_scale,
                                  load_config)
from .forward_models import ForwardModelError
from .inference import GaussNewtonError
from .linalg import ContractionError, FactorizationError
from .mesh_fem import FemAssemblyError

SUBCOMMANDS = {
    "sample-prior": (sample_prior.run, SamplePriorConfig),
    "factor-compare": (factor_compare.run, FactorCompareConfig),
    "monod": (monod.run, MonodConfig),
    "cokrige": (cokrige.run, CokrigeConfig),
    "darcy": (darcy.run, DarcyConfig),
    "verify": (verify.run, VerifyConfig),
}

EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_NUMERIC = 4


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jointprior",
        description="Jointly normal priors with uncertain cross-correlation: "
                    "sampling studies and Bayesian inversion experiments.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config file (unknown keys rejected)")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (default runs/<subcommand>)")
        p.add_argument("--scale", type=float, default=None,
                       help="multiply resolution-like settings (mesh and "
                            "observation grids) by this factor")
        p.add_argument("--samples", type=int, default=None,
                       help="override the MCMC sample count")
        p.add_argument("--burn-in", type=int, default=None,
                       help="override the MCMC burn-in")
    return parser


def _overrides(args, cls):
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    field_names = {f.name for f in cls.__dataclass_fields__.values()}
    if args.samples is not None:
        if "samples" not in field_names:
            raise ConfigError(f"--samples does not apply to {args.subcommand}")
        out["samples"] = args.samples
    if args.burn_in is not None:
        if "burn_in" not in field_names:
            raise ConfigError(f"--burn-in does not apply to {args.subcommand}")
        out["burn_in"] = args.burn_in
    return out


def main(argv=None):
    args = build_parser().parse_args(argv)
    runner, cls = SUBCOMMANDS[args.subcommand]
    try:
        cfg = load_config(cls, args.config, _overrides(args, cls))
        if args.scale is not None:
            apply_scale(cfg, args.scale)
        out_dir = args.out if args.out is not None else Path("runs") / args.subcommand
        result = runner(cfg, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ContractionError, FactorizationError, FemAssemblyError,
            GaussNewtonError) as exc:
        print(f"numerical failure in {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ForwardModelError, ValueError) as exc:
        print(f"model error in {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    if args.subcommand == "verify" and not result["all_passed"]:
        return EXIT_NUMERIC
    print(f"{args.subcommand}: outputs in {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
