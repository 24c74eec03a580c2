"""``calibmoo`` command line: synthesize scenes, calibrate, and analyse archives.

Exit codes: 0 on success, 1 for data or runtime errors, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import warnings
from pathlib import Path

import numpy as np

from .analysis import (
    ROBUSTNESS_COLUMNS,
    innovization_report,
    parse_range,
    robustness_csv,
    robustness_sweep,
    select_knee,
)
from .baselines import epsilon_constraint_sweep, epsilon_results_csv, min_achievable_cost
from .data import (
    LAYOUTS,
    DataError,
    decalibrate,
    generate_synthetic_scene,
    load_scene,
    save_image_ppm,
    write_scene,
)
from .evolution import (
    THREADS_ENV,
    EvaluationError,
    EvolutionConfig,
    archive_csv,
    evolve,
    read_archive_csv,
)
from .objectives import COST_MODES, WeightPair
from .problem import N_VAR, VARIABLES, CalibrationBounds, CalibrationProblem, DEFAULT_N_MIN
from .render import edge_coincidence, front_svg, overlay_image

KNEE_COLUMNS = ("index", "score", *VARIABLES, "chamfer", "comp_cost")


class UsageError(Exception):
    pass


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise DataError(f"{what} file {path} does not exist")
    return path


# --------------------------------------------------------------------------- shared option groups

def _add_search_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pop", type=int, default=100, help="population size (even, >= 4)")
    p.add_argument("--gens", type=int, default=100, help="number of generations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paper-scale", action="store_true", help="population 1000 for 200 generations")
    p.add_argument("--threads", type=int, default=None,
                   help=f"evaluation threads (falls back to ${THREADS_ENV}, then 1)")


def _add_problem_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", type=Path, required=True, help="scene manifest.json")
    p.add_argument("--cost-mode", choices=COST_MODES, default="proxy")
    p.add_argument("--w1", type=float, default=0.8, help="edge weight; the intensity weight is 1 - w1")
    p.add_argument("--n-min", type=int, default=DEFAULT_N_MIN, help="smallest LiDAR subset size")


def _config(args) -> EvolutionConfig:
    threads = args.threads
    if threads is not None and threads < 1:
        raise UsageError(f"--threads must be >= 1, got {threads}")
    common = dict(seed=args.seed, threads=threads, parallel_evaluation=True)
    try:
        if args.paper_scale:
            return EvolutionConfig.paper_scale(**common)
        return EvolutionConfig(population_size=args.pop, generations=args.gens, **common)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _weights(w1: float, has_intensity: bool) -> WeightPair:
    if has_intensity:
        if not 0.0 < w1 < 1.0:
            raise UsageError(f"--w1 must lie in (0, 1) when the scene has intensity points, got {w1}")
        return WeightPair.from_w1(w1)
    if not 0.0 < w1 <= 1.0:
        raise UsageError(f"--w1 must lie in (0, 1], got {w1}")
    if w1 < 1.0:
        warnings.warn("scene has no intensity points; intensity term disabled (w1 = 1)", stacklevel=2)
    return WeightPair(1.0, 0.0)


def _problem(args, w1: float | None = None) -> CalibrationProblem:
    scene, _ = load_scene(_require(args.scene, "scene manifest"))
    weights = _weights(args.w1 if w1 is None else w1, len(scene.gt_intensity) > 0)
    bounds = CalibrationBounds.for_cloud(len(scene.cloud), n_min=args.n_min)
    return CalibrationProblem(scene, bounds=bounds, weights=weights, cost_mode=args.cost_mode, seed=args.seed)


# --------------------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    scene = generate_synthetic_scene(args.seed, layout=args.layout)
    perturbation = None
    if args.decalibrate is not None:
        rot, trans = args.decalibrate
        if rot < 0 or trans < 0:
            raise UsageError("--decalibrate magnitudes must be non-negative")
        nominal, perturbation = decalibrate(scene.ground_truth, (rot, trans), args.seed)
        scene = generate_synthetic_scene(args.seed, layout=args.layout, nominal=nominal)
    path = write_scene(args.out_dir, scene, perturbation, extra={"seed": args.seed, "layout": args.layout})
    print(path)
    return 0


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    problem = _problem(args)
    result = evolve(problem, cfg)
    out = args.out_dir
    _write(out / "archive.csv", archive_csv(result.archive))
    _write(out / "generations.csv", result.log.to_csv())
    _write(out / "front.svg", front_svg(result.archive.objectives))
    _, best = result.archive.min_chamfer()
    print(f"archive {len(result.archive)} entries, min chamfer {best.chamfer:.6g} "
          f"at comp_cost {best.comp_cost:.6g}; wrote {out}")
    return 0


def cmd_epsilon(args) -> int:
    cfg = _config(args)
    problem = _problem(args)
    if args.eps is not None:
        eps = parse_range(args.eps)
    else:
        if args.archive is not None:
            _, objs = read_archive_csv(_require(args.archive, "archive"))
            if len(objs) == 0:
                raise DataError(f"{args.archive}: archive is empty")
            lo, hi = float(objs[:, 1].min()), float(objs[:, 1].max())
        else:
            lo = min_achievable_cost(problem)
            hi = problem.evaluate(np.r_[np.zeros(N_VAR - 1), problem.bounds.n_max]).comp_cost
        eps = [float(v) for v in np.linspace(lo, hi, args.count)]
    results = epsilon_constraint_sweep(problem, eps, cfg)
    _write(args.out, epsilon_results_csv(results))
    print(f"{sum(r.feasible for r in results)}/{len(results)} feasible; wrote {args.out}")
    return 0


def cmd_knee(args) -> int:
    genomes, objs = read_archive_csv(_require(args.archive, "archive"))
    knee = select_knee((genomes, objs), args.max_chamfer, args.max_cost)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(KNEE_COLUMNS)
    w.writerow([knee.index, repr(knee.score), *(repr(float(v)) for v in knee.genome),
                repr(knee.objectives[0]), repr(knee.objectives[1])])
    text = buf.getvalue()
    out = args.out or args.archive.with_name("knee.csv")
    _write(out, text)
    sys.stdout.write(text)
    return 0


def cmd_innovize(args) -> int:
    genomes, objs = read_archive_csv(_require(args.archive, "archive"))
    report = innovization_report((genomes, objs), args.threshold)
    _write(args.out, report.to_csv())
    for a, b, r in report.flagged:
        print(f"{a} ~ {b}: r = {r:+.3f}")
    print(f"{len(report.flagged)} pairs above |r| > {args.threshold}; wrote {args.out}")
    return 0


def cmd_robustness(args) -> int:
    try:
        values = parse_range(args.w1_list)
    except ValueError as e:
        raise UsageError(f"--w1-list: {e}") from None
    bad = [v for v in values if not 0.0 < v < 1.0]
    if bad:
        raise UsageError(f"--w1-list values must lie in (0, 1), got {bad}")
    cfg = _config(args)
    problem = _problem(args, w1=values[0])
    points = robustness_sweep(problem, values, cfg)
    _write(args.out, robustness_csv(points))
    print(f"{len(points)} weights ({len(ROBUSTNESS_COLUMNS)} columns); wrote {args.out}")
    return 0


def _parse_genome(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--genome must be comma-separated numbers, got {text!r}") from None
    if len(vals) not in (6, N_VAR):
        raise UsageError(f"--genome needs 6 or {N_VAR} values, got {len(vals)}")
    return np.array(vals[:6])


def cmd_project(args) -> int:
    scene, _ = load_scene(_require(args.scene, "scene manifest"))
    if args.genome is not None and args.archive is not None:
        raise UsageError("--genome and --archive are mutually exclusive")
    corr = np.zeros(6)
    if args.genome is not None:
        corr = _parse_genome(args.genome)
    elif args.archive is not None:
        genomes, _ = read_archive_csv(_require(args.archive, "archive"))
        if not 0 <= args.row < len(genomes):
            raise DataError(f"{args.archive}: row {args.row} out of range (archive has {len(genomes)} entries)")
        corr = genomes[args.row, :6]
    problem = CalibrationProblem(scene, weights=WeightPair(1.0, 0.0))
    t = problem.extrinsic(np.r_[corr, 0.0])
    save_image_ppm(args.out, overlay_image(scene, t))
    frac = edge_coincidence(scene, t)
    print(f"edge coincidence {frac:.4f} within 1 px; wrote {args.out}")
    return 0


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calibmoo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--layout", choices=sorted(LAYOUTS), default="default")
    p.add_argument("--decalibrate", type=float, nargs=2, metavar=("DEGREES", "METRES"),
                   help="start the nominal extrinsics off the truth by these magnitudes")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="run NSGA-II; writes archive.csv, generations.csv, front.svg")
    _add_problem_options(p)
    _add_search_options(p)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("epsilon", help="epsilon-constraint sweep over comp_cost")
    _add_problem_options(p)
    _add_search_options(p)
    p.add_argument("--eps", help="explicit bounds: start:stop:step or a comma list")
    p.add_argument("--archive", type=Path, help="span the archive's cost range instead")
    p.add_argument("--count", type=int, default=5, help="number of bounds when spanning a range")
    p.add_argument("--out", type=Path, default=Path("epsilon.csv"))
    p.set_defaults(func=cmd_epsilon)

    p = sub.add_parser("knee", help="pick the knee entry of an archive")
    p.add_argument("--archive", type=Path, required=True)
    p.add_argument("--max-chamfer", type=float)
    p.add_argument("--max-cost", type=float)
    p.add_argument("--out", type=Path, help="default: knee.csv next to the archive")
    p.set_defaults(func=cmd_knee)

    p = sub.add_parser("innovize", help="variable/objective correlations over an archive")
    p.add_argument("--archive", type=Path, required=True)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--out", type=Path, default=Path("innovization.csv"))
    p.set_defaults(func=cmd_innovize)

    p = sub.add_parser("robustness", help="single-objective error across edge weights")
    _add_problem_options(p)
    _add_search_options(p)
    p.add_argument("--w1-list", default="0.1:0.9:0.1")
    p.add_argument("--out", type=Path, default=Path("robustness.csv"))
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("project", help="PPM overlay of projected LiDAR edge points")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--genome", help="correction x,y,z,yaw,pitch,roll (metres, radians); default identity")
    p.add_argument("--archive", type=Path, help="take the correction from an archive row")
    p.add_argument("--row", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("overlay.ppm"))
    p.set_defaults(func=cmd_project)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except (DataError, EvaluationError, OSError, ValueError) as e:
        print(f"calibmoo {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
