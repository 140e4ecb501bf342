"""Command-line pipeline: synth, cluster, fit, generate, footprint, compare.

Every stage reads and writes plain-text artifacts in the output directory
so runs are reproducible from the config file alone. Stages compose:
``pipeline`` chains cluster, fit, generate, both footprints and the
comparison for each configured scheme.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import clustering, footprint as fp, gp_model, representative as rep
from . import synth as synthmod
from .config import ConfigError, PipelineConfig, load_config, scheme_by_name
from .trajectory_io import (
    Phase,
    Trajectory,
    TrajectoryError,
    assign_runway,
    classify_phase,
    filter_altitude,
    load_airport_geometry,
    parse_trajectories,
    serialize_airport_geometry,
    serialize_trajectories,
)

REPRESENTATIVE_HEADER = ["cluster", "radius", "angle_deg", "weight", "step",
                         "east_m", "north_m", "alt_m"]


class StageError(RuntimeError):
    """A pipeline stage could not produce its artifacts."""


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------- synth

def cmd_synth(config: PipelineConfig, outdir: Path, seed: int | None = None) -> None:
    cfg = config.synth
    if seed is not None:
        cfg = synthmod.SynthConfig(**{**cfg.__dict__, "seed": seed})
    result = synthmod.generate_dataset(cfg)
    _write(outdir / "trajectories.csv", serialize_trajectories(result.trajectories))
    _write(outdir / "airport.txt", serialize_airport_geometry(result.geometry))
    rows = ["traj_id,truth_cluster"]
    for traj in result.trajectories:
        rows.append(f"{traj.id},{result.truth_labels[traj.id]}")
    _write(outdir / "truth_labels.csv", "\n".join(rows) + "\n")


# ---------------------------------------------------------------- cluster

def cmd_cluster(config: PipelineConfig, outdir: Path) -> list[list[Trajectory]]:
    """Parse, phase/runway split, cluster, altitude-filter; write artifacts.

    Returns the altitude-filtered clusters in their final id order.
    """
    if not config.io.trajectories.exists():
        raise StageError(f"io.trajectories: {config.io.trajectories} does not exist")
    if not config.io.airport.exists():
        raise StageError(f"io.airport: {config.io.airport} does not exist")
    parsed = parse_trajectories(config.io.trajectories)
    if not parsed.trajectories:
        raise StageError("no trajectories parsed")
    geometry = load_airport_geometry(config.io.airport)

    wanted = {"departure": [Phase.DEPARTURE], "approach": [Phase.APPROACH],
              "both": [Phase.DEPARTURE, Phase.APPROACH]}[config.io.phase]
    selected: list[tuple[Trajectory, Phase, str]] = []
    for traj in parsed.trajectories:
        phase = classify_phase(traj, geometry)
        if phase in wanted:
            selected.append((traj, phase, assign_runway(traj, geometry, phase)))
    if not selected:
        raise StageError(f"no trajectories of phase {config.io.phase!r}")

    groups: dict[tuple[str, str], list[tuple[Trajectory, Phase]]] = {}
    for traj, phase, runway in selected:
        groups.setdefault((phase.value, runway), []).append((traj, phase))

    clusters: list[list[tuple[Trajectory, Phase]]] = []
    group_of_cluster: list[tuple[str, str]] = []
    outlier_ids: list[str] = []
    assignment: dict[str, str] = {}
    for key in sorted(groups):
        members = groups[key]
        result = clustering.cluster_pipeline([t for t, _ in members], config.clustering)
        for (traj, phase), label in zip(members, result.labels):
            if label == clustering.NOISE:
                outlier_ids.append(traj.id)
                assignment[traj.id] = "noise"
            else:
                assignment[traj.id] = str(len(clusters) + label)
        for local in result.clusters:
            phase_by_id = {t.id: ph for t, ph in members}
            clusters.append([(t, phase_by_id[t.id]) for t in local])
            group_of_cluster.append(key)

    filtered_clusters: list[list[Trajectory]] = []
    n_dropped = 0
    for members_phase in clusters:
        kept = []
        for traj, phase in members_phase:
            cut = filter_altitude(traj, config.io.max_altitude_m, phase)
            if cut is None:
                n_dropped += 1
            else:
                kept.append(cut)
        filtered_clusters.append(kept)

    lines = ["traj_id,cluster"]
    for traj, _, _ in selected:
        lines.append(f"{traj.id},{assignment[traj.id]}")
    _write(outdir / "assignments.csv", "\n".join(lines) + "\n")

    sizes = ["cluster,count"]
    for idx, members in enumerate(filtered_clusters):
        _write(outdir / f"cluster_{idx:02d}.csv", serialize_trajectories(members))
        sizes.append(f"{idx},{len(members)}")
    _write(outdir / "cluster_sizes.csv", "\n".join(sizes) + "\n")

    summary = io.StringIO()
    summary.write(f"trajectories parsed = {len(parsed.trajectories)}\n")
    summary.write(f"trajectories rejected short = {parsed.n_rejected_short}\n")
    summary.write(f"phase selected ({config.io.phase}) = {len(selected)}\n")
    summary.write(f"clusters = {len(clusters)}\n")
    for idx, (members_phase, key) in enumerate(zip(clusters, group_of_cluster)):
        summary.write(
            f"cluster {idx} ({key[0]} runway {key[1]}): {len(members_phase)} trajectories, "
            f"{len(filtered_clusters[idx])} after altitude filter\n"
        )
    summary.write(f"outliers = {len(outlier_ids)}\n")
    summary.write(f"dropped by altitude filter = {n_dropped}\n")
    _write(outdir / "cluster_summary.txt", summary.getvalue())
    return filtered_clusters


def _load_cluster_files(outdir: Path) -> list[list[Trajectory]]:
    paths = sorted(outdir.glob("cluster_[0-9][0-9].csv"))
    if not paths:
        raise StageError(f"no cluster files in {outdir}; run the cluster stage first")
    return [parse_trajectories(path).trajectories for path in paths]


def _load_cluster_sizes(outdir: Path) -> dict[str, int]:
    path = outdir / "cluster_sizes.csv"
    if not path.exists():
        raise StageError(f"{path} missing; run the cluster stage first")
    sizes = {}
    for row in csv.DictReader(io.StringIO(path.read_text(encoding="utf-8"))):
        sizes[row["cluster"]] = int(row["count"])
    return sizes


# ---------------------------------------------------------------- fit

def cmd_fit(config: PipelineConfig, outdir: Path, threads: int = 1) -> list[gp_model.TrajectoryModel]:
    clusters = _load_cluster_files(outdir)
    basis = gp_model.BasisSet.uniform(config.model.n_rbf)

    def fit_one(cluster: list[Trajectory]) -> gp_model.TrajectoryModel:
        if not cluster:
            raise StageError("cluster file holds no trajectories")
        return gp_model.fit_cluster(cluster, basis, config.model.fit)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            models = list(pool.map(fit_one, clusters))
    else:
        models = [fit_one(c) for c in clusters]

    report = ["cluster,n_trajectories,iterations,converged,final_negloglik"]
    for idx, model in enumerate(models):
        gp_model.save_model(model, outdir / f"model_{idx:02d}.txt")
        final = model.nll_trace[-1] if model.nll_trace else float("nan")
        report.append(f"{idx},{model.n_trajectories},{model.n_iterations},"
                      f"{str(model.converged).lower()},{final!r}")
    _write(outdir / "fit_report.csv", "\n".join(report) + "\n")
    return models


def _load_models(outdir: Path) -> list[gp_model.TrajectoryModel]:
    paths = sorted(outdir.glob("model_[0-9][0-9].txt"))
    if not paths:
        raise StageError(f"no model files in {outdir}; run the fit stage first")
    return [gp_model.load_model(path) for path in paths]


# ---------------------------------------------------------------- generate

def serialize_representatives(reps: list[rep.WeightedTrajectory]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPRESENTATIVE_HEADER)
    for trajectory in reps:
        for step, point in enumerate(trajectory.points):
            writer.writerow([
                trajectory.cluster, repr(trajectory.radius), repr(trajectory.angle_deg),
                repr(trajectory.weight), step,
                repr(float(point[0])), repr(float(point[1])), repr(float(point[2])),
            ])
    return out.getvalue()


def parse_representatives(text: str) -> list[rep.WeightedTrajectory]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != REPRESENTATIVE_HEADER:
        raise TrajectoryError("not a representative-trajectory CSV")
    grouped: dict[tuple[str, float, float], list] = {}
    weights: dict[tuple[str, float, float], float] = {}
    for row in reader:
        if not row:
            continue
        key = (row[0], float(row[1]), float(row[2]))
        weights[key] = float(row[3])
        grouped.setdefault(key, []).append(
            (int(row[4]), float(row[5]), float(row[6]), float(row[7]))
        )
    reps = []
    for key, entries in grouped.items():
        entries.sort(key=lambda e: e[0])
        points = np.array([[e, n, a] for _, e, n, a in entries])
        reps.append(rep.WeightedTrajectory(points, weights[key], key[1], key[2], key[0]))
    return reps


def cmd_generate(config: PipelineConfig, outdir: Path,
                 threads: int = 1) -> dict[str, list[rep.WeightedTrajectory]]:
    models = _load_models(outdir)
    by_scheme: dict[str, list[rep.WeightedTrajectory]] = {}
    for name in config.representative.schemes:
        scheme = scheme_by_name(config, name)

        def generate_one(item: tuple[int, gp_model.TrajectoryModel]) -> list[rep.WeightedTrajectory]:
            idx, model = item
            return rep.generate_representatives(
                model, scheme, steps=config.representative.steps,
                d_tau=config.representative.d_tau, cluster=str(idx),
            )

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                chunks = list(pool.map(generate_one, enumerate(models)))
        else:
            chunks = [generate_one(item) for item in enumerate(models)]
        reps = [t for chunk in chunks for t in chunk]
        _write(outdir / f"representatives_{name}.csv", serialize_representatives(reps))
        by_scheme[name] = reps
    return by_scheme


# ---------------------------------------------------------------- footprint

def read_grid(path: Path) -> fp.FootprintGrid:
    """Rebuild a footprint grid from its CSV artifact."""
    rows = list(csv.reader(io.StringIO(path.read_text(encoding="utf-8"))))
    if not rows or rows[0] != ["east_m", "north_m", "value_pct"]:
        raise StageError(f"{path} is not a footprint grid CSV")
    easts = sorted({float(r[0]) for r in rows[1:]})
    norths = sorted({float(r[1]) for r in rows[1:]})
    nx, ny = len(easts), len(norths)
    if nx * ny != len(rows) - 1:
        raise StageError(f"{path}: grid is not complete")
    if nx > 1:
        cell = (easts[-1] - easts[0]) / (nx - 1)
    elif ny > 1:
        cell = (norths[-1] - norths[0]) / (ny - 1)
    else:
        cell = 1.0
    spec = fp.GridSpec((easts[0], norths[0]), cell, nx, ny)
    values = np.zeros((nx, ny))
    e_index = {e: i for i, e in enumerate(easts)}
    n_index = {n: j for j, n in enumerate(norths)}
    for r in rows[1:]:
        values[e_index[float(r[0])], n_index[float(r[1])]] = float(r[2])
    return fp.FootprintGrid(spec, values, 0.0)


def _grid_spec(config: PipelineConfig, reference: list[Trajectory]) -> fp.GridSpec:
    cfg = config.footprint
    if cfg.explicit_grid():
        return fp.GridSpec((cfg.origin_east, cfg.origin_north), cfg.cell, cfg.nx, cfg.ny)
    return fp.grid_from_trajectories(reference, cfg.range_m, cfg.nx, cfg.ny)


def cmd_footprint(config: PipelineConfig, outdir: Path,
                  inputs: list[Path] | None = None) -> dict[str, fp.FootprintGrid]:
    """Grids for the pipeline artifacts, or for explicit input files.

    Without inputs: the raw grid over the filtered cluster trajectories plus
    one weighted grid per representatives_<scheme>.csv present, all sharing
    one grid spec, with a comparison per scheme. With explicit inputs each
    file yields one grid (trajectory CSVs need no sizes; representative CSVs
    read cluster_sizes.csv); two inputs additionally yield a comparison of
    the first against the second.
    """
    grids: dict[str, fp.FootprintGrid] = {}
    if inputs:
        sizes = None
        spec = None
        parsed_inputs = []
        for path in inputs:
            if not path.exists():
                raise StageError(f"input {path} does not exist")
            head = path.read_text(encoding="utf-8").splitlines()[0] if path.stat().st_size else ""
            kind = "rep" if head == ",".join(REPRESENTATIVE_HEADER) else "traj"
            parsed_inputs.append((path, kind))
        if config.footprint.explicit_grid():
            spec = _grid_spec(config, [])
        else:
            for path, kind in parsed_inputs:
                if kind == "traj":
                    spec = _grid_spec(config, parse_trajectories(path).trajectories)
                    break
        if spec is None:
            raise StageError("footprint: set an explicit grid to evaluate representative inputs alone")
        for path, kind in parsed_inputs:
            if kind == "traj":
                tracks = parse_trajectories(path).trajectories
                grid = fp.footprint_raw(tracks, spec, config.footprint.range_m)
            else:
                if sizes is None:
                    sizes = _load_cluster_sizes(outdir)
                reps = parse_representatives(path.read_text(encoding="utf-8"))
                grid = fp.footprint_weighted(reps, sizes, sum(sizes.values()),
                                             spec, config.footprint.range_m)
            name = path.stem
            grids[name] = grid
            _write(outdir / f"footprint_{name}.csv", fp.serialize_grid(grid))
        if len(parsed_inputs) == 2:
            names = list(grids)
            comparison = fp.compare_footprints(grids[names[0]], grids[names[1]])
            _write(outdir / f"comparison_{names[0]}_vs_{names[1]}.txt",
                   fp.serialize_comparison(comparison))
        return grids

    clusters = _load_cluster_files(outdir)
    reference = [t for cluster in clusters for t in cluster]
    if not reference:
        raise StageError("cluster files hold no trajectories")
    sizes = _load_cluster_sizes(outdir)
    n_total = sum(sizes.values())
    spec = _grid_spec(config, reference)
    raw = fp.footprint_raw(reference, spec, config.footprint.range_m, n_total)
    grids["raw"] = raw
    _write(outdir / "footprint_raw.csv", fp.serialize_grid(raw))
    for name in config.representative.schemes:
        rep_path = outdir / f"representatives_{name}.csv"
        if not rep_path.exists():
            raise StageError(f"{rep_path} missing; run the generate stage first")
        reps = parse_representatives(rep_path.read_text(encoding="utf-8"))
        weighted = fp.footprint_weighted(reps, sizes, n_total, spec, config.footprint.range_m)
        grids[name] = weighted
        _write(outdir / f"footprint_{name}.csv", fp.serialize_grid(weighted))
        comparison = fp.compare_footprints(weighted, raw)
        _write(outdir / f"comparison_{name}.txt", fp.serialize_comparison(comparison))
    return grids


def cmd_compare(candidate: Path, reference: Path, out_path: Path) -> None:
    comparison = fp.compare_footprints(read_grid(candidate), read_grid(reference))
    _write(out_path, fp.serialize_comparison(comparison))


# ---------------------------------------------------------------- pipeline

def cmd_pipeline(config: PipelineConfig, outdir: Path, threads: int = 1) -> None:
    clusters = cmd_cluster(config, outdir)
    cmd_fit(config, outdir, threads)
    by_scheme = cmd_generate(config, outdir, threads)
    grids = cmd_footprint(config, outdir)
    if config.output.plots:
        from . import plots

        first_scheme = config.representative.schemes[0]
        plots.plot_top_view(clusters, outdir / "top_view.svg", by_scheme[first_scheme])
        if clusters:
            largest = max(range(len(clusters)), key=lambda i: len(clusters[i]))
            in_largest = [t for t in by_scheme[first_scheme] if t.cluster == str(largest)]
            plots.plot_side_view(clusters[largest], outdir / "side_view.svg", in_largest)
        for name, grid in grids.items():
            plots.plot_footprint(grid, outdir / f"footprint_{name}.svg", name)


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajreduce",
        description="Replace historical flight tracks with weighted representative trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=name != "compare", type=Path,
                       help="pipeline configuration file")
        p.add_argument("--output", type=Path, default=None,
                       help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")
        return p

    p_synth = add("synth", "emit a seeded synthetic corridor dataset")
    p_synth.add_argument("--seed", type=int, default=None, help="RNG seed override")
    add("cluster", "parse, classify and cluster trajectories")
    add("fit", "fit one corridor model per cluster file")
    add("generate", "trace weighted representative trajectories per model")
    p_fp = add("footprint", "evaluate proximity footprint grids")
    p_fp.add_argument("inputs", nargs="*", type=Path,
                      help="trajectory or representative CSVs (default: stage artifacts)")
    p_cmp = sub.add_parser("compare", help="compare two footprint grid CSVs")
    p_cmp.add_argument("candidate", type=Path)
    p_cmp.add_argument("reference", type=Path)
    p_cmp.add_argument("--output", type=Path, default=Path("comparison.txt"),
                       help="output file")
    add("pipeline", "run every stage in sequence")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            cmd_compare(args.candidate, args.reference, args.output)
            return 0
        config = load_config(args.config)
        outdir = args.output if args.output is not None else config.output.directory
        outdir.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            cmd_synth(config, outdir, args.seed)
        elif args.command == "cluster":
            cmd_cluster(config, outdir)
        elif args.command == "fit":
            cmd_fit(config, outdir, args.threads)
        elif args.command == "generate":
            cmd_generate(config, outdir, args.threads)
        elif args.command == "footprint":
            cmd_footprint(config, outdir, args.inputs or None)
        elif args.command == "pipeline":
            cmd_pipeline(config, outdir, args.threads)
        return 0
    except (ConfigError, StageError, TrajectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
