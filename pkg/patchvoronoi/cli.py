"""
Command-line front end.

    patchvoronoi medial-axis --surface cube.obj --tets cube.msh --out ma.obj

Exit codes: 0 success, 1 invalid input or arguments, 2 float-mode
robustness abort (rerun with --exact).
"""

import argparse
import dataclasses
import logging
import os
import sys
import time
from typing import List, Optional, Sequence

from dotenv import load_dotenv

from . import __version__, enable_debug
from .constants import (
    DEFAULT_EPSILON,
    DEFAULT_ORGANIC_DIHEDRAL,
    DEFAULT_ORGANIC_MIN_AREA,
    EXIT_OK,
    EXIT_ROBUSTNESS,
    EXIT_VALIDATION,
    LOG_LEVEL_ENV_VAR,
    OUTPUT_FORMATS,
    PRODUCTS,
    THREADS_ENV_VAR,
    VARIANTS,
)
from .exceptions import ConfigurationError, InconsistentCutError, InvalidWeightError, PatchVoronoiError
from .linear_field import MetricVariant, weights_from_lines
from .mesh_io import load_patched_surface, load_tet_mesh, write_cell_complex
from .pipeline import OrganicFilter, PipelineConfig, RunStats, compute

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as ConfigurationError."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigurationError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--surface", required=True, help="Input OBJ surface (g/o groups are patches)")
    common.add_argument("--labels", help="Sidecar file with one patch id per triangle")
    common.add_argument("--tets", required=True, help="Tet mesh (.msh v2 or .vtk)")
    common.add_argument("--out", required=True, help="Output path")
    common.add_argument("--format", choices=OUTPUT_FORMATS, help="Output format (default: from --out, else obj)")
    common.add_argument("--exact", action="store_true", help="Use the exact rational backend")
    common.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="Float-mode tolerance (default: %(default)s)")
    common.add_argument("--d-max", type=float, help="Prism roof override (default: 2 * max field value + bbox diagonal)")
    common.add_argument("--threads", type=int, help=f"Worker processes (default: ${THREADS_ENV_VAR} or 1)")
    common.add_argument("--variant", choices=VARIANTS, default="vd", help="Metric variant (default: %(default)s)")
    common.add_argument("--weights", help="File of 'patch_id weight' lines")
    common.add_argument("--exclude", help="Comma-separated patch ids that are not generators")
    common.add_argument("--no-weld", action="store_true", help="Keep per-tet vertices unmerged")
    common.add_argument("--no-fallback", action="store_true", help="Abort instead of recomputing inconsistent tets exactly")
    common.add_argument("--stats", help="Also write the stats line to this file")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = _Parser(prog="patchvoronoi", description="Patch Voronoi diagrams, medial axes and offsets on tet meshes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(PRODUCTS) + "}")
    sub.required = True
    sub.add_parser("voronoi", parents=[common], help="Patch Voronoi diagram")
    medial = sub.add_parser("medial-axis", parents=[common], help="Medial axis of a closed surface")
    medial.add_argument("--clip-interior", action="store_true", help="Skip tets whose centroid lies outside the surface")
    medial.add_argument(
        "--organic-dihedral",
        type=float,
        help=f"Remove facets between patches meeting at >= this angle (0 disables; default when filtering: {DEFAULT_ORGANIC_DIHEDRAL})",
    )
    medial.add_argument(
        "--organic-min-area",
        type=float,
        help=f"Remove components below this area (default when filtering: {DEFAULT_ORGANIC_MIN_AREA} * diagonal^2)",
    )
    offset = sub.add_parser("offset", parents=[common], help="Inward and outward offset surfaces")
    offset.add_argument("--offset-distance", type=float, required=True, help="Offset distance d > 0")
    return parser


def _threads(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.getenv(THREADS_ENV_VAR)
    if not env:
        return 1
    try:
        return int(env)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}")


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    weights = {}
    if args.weights:
        try:
            with open(args.weights, "r") as fh:
                weights = weights_from_lines(fh)
        except OSError as e:
            raise ConfigurationError(f"Cannot read weights file: {e}")
    organic = None
    dihedral = getattr(args, "organic_dihedral", None)
    min_area = getattr(args, "organic_min_area", None)
    if dihedral is not None or min_area is not None:
        organic = OrganicFilter(
            dihedral_threshold=DEFAULT_ORGANIC_DIHEDRAL if dihedral is None else dihedral,
            min_facet_area=min_area,
        )
    return PipelineConfig(
        product=args.command,
        variant=MetricVariant(args.variant, weights),
        offset_distance=getattr(args, "offset_distance", None),
        epsilon=args.epsilon,
        backend="exact" if args.exact else "float",
        d_max=args.d_max,
        threads=_threads(args.threads),
        weld=not args.no_weld,
        organic_filter=organic,
        clip_to_interior=getattr(args, "clip_interior", False),
        exact_fallback=not args.no_fallback,
    )


def report_stats(stats: RunStats) -> str:
    """One line of key=value pairs describing a finished run."""
    histogram = ",".join(f"{k}:{v}" for k, v in sorted(stats.generator_histogram.items()))
    fields = [
        f"product={stats.product}",
        f"tets={stats.tets}",
        f"active={stats.active_tets}",
        f"generators={histogram or '-'}",
        f"facets={stats.facets}",
        f"cuts={stats.cuts}",
        f"queries={stats.queries}",
        f"fallbacks={stats.fallbacks}",
    ]
    fields.extend(f"seconds.{stage}={sec:.6f}" for stage, sec in sorted(stats.stage_seconds.items()))
    return " ".join(fields)


def _layer_path(path: str, layer: str) -> str:
    stem, ext = os.path.splitext(path)
    return f"{stem}.{layer}{ext}"


def _execute(args: argparse.Namespace) -> RunStats:
    cfg = config_from_args(args)
    stats = RunStats()
    start = time.perf_counter()
    surface = load_patched_surface(args.surface, args.labels)
    if args.exclude:
        try:
            extra = {int(t) for t in args.exclude.split(",") if t.strip()}
        except ValueError:
            raise ConfigurationError(f"--exclude expects comma-separated ids, got {args.exclude!r}")
        surface = dataclasses.replace(surface, excluded_patches=surface.excluded_patches | extra)
    mesh = load_tet_mesh(args.tets)
    stats.timed("load", start)

    result = compute(surface, mesh, cfg, stats)
    fmt = args.format or (os.path.splitext(args.out)[1].lstrip(".").lower() or "obj")
    if fmt not in OUTPUT_FORMATS:
        fmt = "obj"
    start = time.perf_counter()
    if cfg.product == "offset":
        write_cell_complex(result.inward, _layer_path(args.out, "inward"), fmt)
        write_cell_complex(result.outward, _layer_path(args.out, "outward"), fmt)
    else:
        write_cell_complex(result, args.out, fmt)
    stats.timed("write", start)
    return stats


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI.

    Args:
        argv: Arguments without the program name (default: sys.argv[1:])

    Returns:
        Exit code
    """
    load_dotenv()
    arguments: List[str] = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(arguments)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)

    level = os.getenv(LOG_LEVEL_ENV_VAR, "INFO").upper()
    enable_debug(logging.DEBUG if args.verbose else getattr(logging, level, logging.INFO))

    try:
        stats = _execute(args)
    except InconsistentCutError as e:
        logger.error(f"{e} (tet {e.tet})")
        return EXIT_ROBUSTNESS
    except InvalidWeightError as e:
        logger.error(f"{e} (patch {e.patch})")
        return EXIT_VALIDATION
    except PatchVoronoiError as e:
        logger.error(str(e))
        return EXIT_VALIDATION
    except OSError as e:
        logger.error(f"Cannot write output: {e}")
        return EXIT_VALIDATION

    line = report_stats(stats)
    print(line, file=sys.stderr)
    if args.stats:
        with open(args.stats, "w") as fh:
            fh.write(line + "\n")
    return EXIT_OK


def main() -> None:
    sys.exit(run())
