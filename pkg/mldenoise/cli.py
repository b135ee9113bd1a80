"""
Command-line interface for mldenoise.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Callable, NoReturn

import numpy as np

from mldenoise import __version__
from mldenoise.config import RunManifest, load_config, parse_bool
from mldenoise.exceptions import (
    ConfigError,
    DimensionError,
    ImageFormatError,
    MldenoiseError,
    SweepError,
    UndefinedMetricError,
)
from mldenoise.image import Image
from mldenoise.image_io import read_image, write_image
from mldenoise.metrics import LOWPASS_FRACTION, METRICS_CSV_HEADER, evaluate
from mldenoise.noise import GaussianParams, GGParams, resolve_seed, synthesize_log_speckle
from mldenoise.phantom import PhantomSpec, default_phantom_spec, generate_phantom
from mldenoise.solvers import METHODS, SCHEMES, NoiseParams, SolverConfig, denoise
from mldenoise.sweep import (
    OBJECTIVES,
    ParamGrid,
    format_best_summary,
    format_sweep_csv,
    paper_grids,
    run_sweep,
)

logger = logging.getLogger("mldenoise")

# Exit codes following sysexits.h conventions
EXIT_SUCCESS = 0
EXIT_ERROR = 1  # General error
EXIT_NOT_CONVERGED = 2  # Solver stopped without meeting the criterion
EXIT_USAGE = 64  # Command line usage error
EXIT_DATAERR = 65  # Input data format error
EXIT_NOINPUT = 66  # Input file not found or not readable


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with EXIT_USAGE."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _UsageError(Exception):
    pass


def _float_list(value: str) -> list[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}") from e


def _configure_logging(args: argparse.Namespace) -> None:
    if args.quiet:
        level = logging.WARNING
    elif args.verbose:
        level = logging.DEBUG
    else:
        level = logging.INFO
    logging.basicConfig(
        stream=sys.stderr, format="%(levelname)s: %(message)s", level=level, force=True
    )


def _manifest_path(output: Path) -> Path:
    return output.with_name(output.name + ".manifest.txt")


def _new_manifest(
    args: argparse.Namespace, argv: list[str], seed: int | None = None
) -> RunManifest:
    manifest = RunManifest(command=args.command, argv=argv, version=__version__, seed=seed)
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command", "quiet", "verbose", "seed"):
            continue
        if isinstance(value, list):
            value = ",".join(repr(v) for v in value)
        manifest.set(key, "" if value is None else value)
    return manifest


def _solver_config(args: argparse.Namespace, alpha: float | None = None) -> SolverConfig:
    return SolverConfig(
        alpha=args.alpha if alpha is None else alpha,
        beta=args.beta,
        tol=args.tol,
        max_iter=args.max_iter,
        grad_eps=args.grad_eps,
        scheme=args.scheme,
        record_every=args.record_every,
    )


def _to_unit_range(img: Image) -> tuple[Image, float, float]:
    lo = float(np.min(img.data))
    hi = float(np.max(img.data))
    if hi <= lo:
        return img.with_data(np.zeros(img.shape)), lo, hi
    return img.with_data((img.data - lo) / (hi - lo)), lo, hi


def cmd_synth(args: argparse.Namespace, argv: list[str]) -> int:
    """Write a phantom, its speckled envelope and the log-compressed speckled image."""
    try:
        spec = PhantomSpec.load(args.spec) if args.spec else default_phantom_spec()
        if args.size is not None:
            spec = dataclasses.replace(spec, size=args.size)
        params = GGParams(args.gamma, args.nu, args.delta)
        seed = resolve_seed(args.seed)
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NOINPUT
    except ConfigError as e:
        print(f"Error: Invalid phantom spec: {e}", file=sys.stderr)
        return EXIT_DATAERR
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    out_dir: Path = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = f".{args.format}"

    cartesian, polar = generate_phantom(spec)
    ref = polar if args.domain == "polar" else cartesian
    logger.info(
        "Speckling %dx%d %s phantom (gamma=%g nu=%g delta=%g seed=%d)",
        ref.width, ref.height, args.domain, params.gamma, params.nu, params.delta, seed,
    )
    speckled, log_speckled = synthesize_log_speckle(ref, params, seed)

    if args.seed is None:
        # Replaying the recorded argv must draw the same speckle.
        argv = [*argv, "--seed", str(seed)]
    manifest = _new_manifest(args, argv, seed)
    outputs = {"reference": ref, "speckled": speckled, "log_speckled": log_speckled}
    for name, img in outputs.items():
        path = out_dir / f"{name}{ext}"
        if ext != ".npy" and name != "reference":
            img, lo, hi = _to_unit_range(img)
            manifest.set(f"{name}.range", f"{lo!r},{hi!r}")
        write_image(img, path)
        manifest.set(f"output.{name}", path)
        logger.info("Wrote %s", path)

    spec.save(out_dir / "phantom.txt")
    manifest.finish()
    manifest.write(out_dir / "manifest.txt")
    return EXIT_SUCCESS


def cmd_denoise(args: argparse.Namespace, argv: list[str]) -> int:
    """Denoise one image and print a key=value status line."""
    try:
        cfg = _solver_config(args)
        params: NoiseParams
        if args.method == "mld_gg":
            params = GGParams(args.gamma, args.nu, args.delta)
        elif args.method == "mld_gaussian":
            params = GaussianParams(mu=args.mu)
        else:
            params = None
    except ValueError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        image = read_image(args.input)
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NOINPUT
    except ImageFormatError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATAERR

    logger.info(
        "Denoising %s (%dx%d) with %s, alpha=%g",
        args.input, image.width, image.height, args.method, cfg.alpha,
    )
    try:
        result = denoise(image, args.method, params, cfg)
    except (MldenoiseError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATAERR

    write_image(result.image, args.output)
    print(result.status_line())

    manifest = _new_manifest(args, argv)
    for key, value in result.to_dict().items():
        manifest.set(f"result.{key}", value)
    manifest.finish()
    manifest.write(_manifest_path(args.output))

    if not result.converged:
        print(f"Warning: {args.method} did not converge ({result.status})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_SUCCESS


def cmd_metrics(args: argparse.Namespace, argv: list[str]) -> int:
    """Print the metrics CSV row of a denoised image against a reference."""
    try:
        ref = read_image(args.reference)
        test = read_image(args.test)
        noisy = read_image(args.noisy) if args.noisy else None
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NOINPUT
    except ImageFormatError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATAERR

    try:
        report = evaluate(ref, test, noisy=noisy, literal=args.literal_eps_e)
    except (DimensionError, UndefinedMetricError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATAERR

    lines = [] if args.no_header else [METRICS_CSV_HEADER]
    lines.append(report.to_csv_row(args.frame_id))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)

    if args.output:
        args.output.write_text(text)
        manifest = _new_manifest(args, argv)
        manifest.set("lowpass_fraction", LOWPASS_FRACTION)
        manifest.finish()
        manifest.write(_manifest_path(args.output))
    return EXIT_SUCCESS


def _sweep_grid(args: argparse.Namespace) -> ParamGrid:
    if args.paper_grids:
        mld, tvl1 = paper_grids()
        if args.method == "mld_gg":
            grid = mld
        elif args.method == "tvl1":
            grid = tvl1
        else:
            raise _UsageError("--paper-grids is defined for mld_gg and tvl1 only")
        grid = dataclasses.replace(grid, objective=args.objective, direction=args.direction)
    else:
        if not args.alphas:
            raise _UsageError("--alphas is required unless --paper-grids is given")
        gg = args.method == "mld_gg"
        if gg and not (args.gammas and args.nus and args.deltas):
            raise _UsageError("mld_gg sweeps need --gammas, --nus and --deltas")
        grid = ParamGrid(
            method=args.method,
            alpha_values=tuple(args.alphas),
            gamma_values=tuple(args.gammas) if gg else None,
            nu_values=tuple(args.nus) if gg else None,
            delta_values=tuple(args.deltas) if gg else None,
            objective=args.objective,
            direction=args.direction,
        )
    return grid.thinned(args.stride)


def cmd_sweep(args: argparse.Namespace, argv: list[str]) -> int:
    """Run a parameter sweep and write its CSV report."""
    try:
        grid = _sweep_grid(args)
        cfg = _solver_config(args, alpha=grid.alpha_values[0])
        if args.jobs < 1:
            raise ValueError(f"--jobs must be at least 1, got {args.jobs}")
    except (_UsageError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        ref = read_image(args.reference)
        noisy = read_image(args.noisy)
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NOINPUT
    except ImageFormatError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATAERR

    manifest = _new_manifest(args, argv)
    manifest.set("grid.size", grid.size)
    manifest.set("lowpass_fraction", LOWPASS_FRACTION)
    exit_code = EXIT_SUCCESS
    try:
        report = run_sweep(ref, noisy, grid, cfg, jobs=args.jobs)
    except DimensionError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATAERR
    except SweepError as e:
        print(f"Error: {e}", file=sys.stderr)
        if e.report is None:
            return EXIT_ERROR
        report = e.report
        exit_code = EXIT_ERROR

    args.out.write_text(format_sweep_csv(report))
    logger.info("Wrote %d rows to %s", len(report.rows), args.out)
    print(format_best_summary(report))

    manifest.finish()
    manifest.write(_manifest_path(args.out))
    return exit_code


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        type=Path,
        metavar="FILE",
        help="key=value (or JSON) file of option defaults; flags override it",
    )
    parser.add_argument(
        "-q",
        "--quiet",
        action="store_true",
        help="Suppress progress messages",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Show detailed processing information",
    )


def _add_gg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--gamma", type=float, default=1.5, help="GG gamma (default: 1.5)")
    parser.add_argument("--nu", type=float, default=1.5, help="GG nu (default: 1.5)")
    parser.add_argument("--delta", type=float, default=1.5, help="GG delta (default: 1.5)")


def _add_solver(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--beta", type=float, default=0.5, help="Sub-relaxation (default: 0.5)")
    parser.add_argument("--tol", type=float, default=1e-5, help="Stop tolerance (default: 1e-5)")
    parser.add_argument(
        "--max-iter", type=int, default=5000, help="Iteration cap (default: 5000)"
    )
    parser.add_argument(
        "--grad-eps", type=float, default=1e-8, help="Gradient smoothing (default: 1e-8)"
    )
    parser.add_argument(
        "--scheme",
        choices=SCHEMES,
        default="implicit",
        help="MLD update: implicit (sparse solve) or pointwise (default: implicit)",
    )
    parser.add_argument(
        "--record-every",
        type=int,
        default=10,
        metavar="N",
        help="Record the energy every N iterations (default: 10)",
    )


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    """Build the top-level parser and return it with its subcommand parsers."""
    parser = _ArgumentParser(
        prog="mldenoise",
        description="Variational denoising of log-compressed speckle images",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  mldenoise synth --out-dir run1 --seed 42
  mldenoise denoise run1/log_speckled.npy -o run1/mld.npy --alpha 0.5 \\
      --gamma 1.4 --nu 1.4 --delta 1.3
  mldenoise denoise run1/log_speckled.npy -o run1/tvl1.npy --method tvl1 --alpha 0.58
  mldenoise metrics run1/reference.npy run1/mld.npy --noisy run1/log_speckled.npy
  mldenoise sweep run1/reference.npy run1/log_speckled.npy --paper-grids --stride 2 \\
      --jobs 8 --out mld_sweep.csv

Methods:
  mld_gg        maximum-likelihood data term for log-compressed generalized gamma noise
  tvl1          |I - J| + alpha |grad J| (primal-dual)
  mld_gaussian  (I - J - mu)^2 + alpha |grad J|; mu = 0 is the ROF model

Exit codes:
  0 success, 1 error, 2 not converged, 64 usage, 65 bad data, 66 missing input
        """,
    )
    parser.add_argument(
        "-V",
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    synth = sub.add_parser("synth", help="Generate a speckled phantom")
    synth.add_argument(
        "--spec", type=Path, metavar="FILE", help="Phantom spec file (default: canonical phantom)"
    )
    synth.add_argument("--size", type=int, help="Override the phantom side length")
    synth.add_argument(
        "--domain",
        choices=["cartesian", "polar"],
        default="cartesian",
        help="Rendering to speckle (default: cartesian)",
    )
    _add_gg(synth)
    synth.add_argument("--seed", type=int, help="64-bit seed (default: drawn and recorded)")
    synth.add_argument(
        "-o", "--out-dir", type=Path, default=Path("."), help="Output directory (default: .)"
    )
    synth.add_argument(
        "-f",
        "--format",
        choices=["npy", "pgm", "png"],
        default="npy",
        help="Image format (default: npy); pgm/png outputs are rescaled to [0, 1]",
    )
    _add_common(synth)
    synth.set_defaults(func=cmd_synth)

    den = sub.add_parser("denoise", help="Denoise an image")
    den.add_argument("input", type=Path, help="Input image (.npy, .pgm or .png)")
    den.add_argument("-o", "--output", type=Path, required=True, help="Output image")
    den.add_argument("-m", "--method", choices=METHODS, default="mld_gg", help="Denoiser")
    den.add_argument("-a", "--alpha", type=float, default=0.5, help="Weight alpha (default: 0.5)")
    _add_gg(den)
    den.add_argument("--mu", type=float, default=0.0, help="Gaussian noise mean (default: 0)")
    _add_solver(den)
    _add_common(den)
    den.set_defaults(func=cmd_denoise)

    met = sub.add_parser("metrics", help="Score a denoised image against a reference")
    met.add_argument("reference", type=Path, help="Noiseless reference image")
    met.add_argument("test", type=Path, help="Denoised image")
    met.add_argument("--noisy", type=Path, metavar="FILE", help="Denoiser input (for pearson)")
    met.add_argument(
        "--literal-eps-e",
        action="store_true",
        help="Use the squared-numerator edge correlation",
    )
    met.add_argument("--frame-id", default="0", help="Value of the frame_id column (default: 0)")
    met.add_argument("--no-header", action="store_true", help="Omit the CSV header")
    met.add_argument("-o", "--output", type=Path, help="Also write the CSV to FILE")
    _add_common(met)
    met.set_defaults(func=cmd_metrics)

    sw = sub.add_parser("sweep", help="Brute-force parameter sweep")
    sw.add_argument("reference", type=Path, help="Noiseless reference image")
    sw.add_argument("noisy", type=Path, help="Noisy image to denoise")
    sw.add_argument("-m", "--method", choices=METHODS, default="mld_gg", help="Denoiser")
    sw.add_argument("--paper-grids", action="store_true", help="Use the published grid")
    sw.add_argument("--alphas", type=_float_list, help="Comma-separated alpha values")
    sw.add_argument("--gammas", type=_float_list, help="Comma-separated gamma values")
    sw.add_argument("--nus", type=_float_list, help="Comma-separated nu values")
    sw.add_argument("--deltas", type=_float_list, help="Comma-separated delta values")
    sw.add_argument("--stride", type=int, default=1, help="Thin gamma/nu/delta by N")
    sw.add_argument("-j", "--jobs", type=int, default=1, help="Worker processes (default: 1)")
    sw.add_argument("--objective", choices=OBJECTIVES, default="eps_b", help="Objective")
    sw.add_argument("--direction", choices=["minimize", "maximize"], help="Objective sense")
    sw.add_argument("--out", type=Path, required=True, help="Output CSV")
    _add_solver(sw)
    _add_common(sw)
    sw.set_defaults(func=cmd_sweep)

    return parser, dict(sub.choices)


def _apply_config(sub: argparse.ArgumentParser, path: Path) -> None:
    """Install a config file's values as defaults of a subcommand parser."""
    values = load_config(path)
    actions = {a.dest: a for a in sub._actions}
    defaults: dict[str, object] = {}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("help", "config"):
            raise _UsageError(f"{path}: unknown option '{key}'")
        value: object = raw
        if isinstance(action, argparse._StoreTrueAction):
            value = parse_bool(raw)
        elif action.choices is not None and raw not in action.choices:
            raise _UsageError(f"{path}: invalid value {raw!r} for '{key}'")
        defaults[dest] = value
        # Required options satisfied by the file become optional.
        action.required = False
    sub.set_defaults(**defaults)


def _find_config(argv: list[str]) -> Path | None:
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            return Path(argv[i + 1])
        if token.startswith("--config="):
            return Path(token.split("=", 1)[1])
    return None


def main(argv: list[str] | None = None) -> int:
    """Main entry point for the mldenoise CLI."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()

    # Config values must be installed as defaults before required options are checked.
    config_path = _find_config(argv)
    command = next((t for t in argv if t in subparsers), None)
    if config_path is not None and command is not None:
        try:
            _apply_config(subparsers[command], config_path)
        except FileNotFoundError as e:
            print(f"Error: {e}", file=sys.stderr)
            return EXIT_NOINPUT
        except (_UsageError, ConfigError) as e:
            print(f"Error: {e}", file=sys.stderr)
            return EXIT_USAGE

    args = parser.parse_args(argv)
    _configure_logging(args)
    func: Callable[[argparse.Namespace, list[str]], int] = args.func
    try:
        return func(args, argv)
    except OSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
