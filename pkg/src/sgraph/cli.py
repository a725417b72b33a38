"""Command-line interface: simulate / slam / eval / ablate."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from .ablation import evaluate_run, run_ablation, stream_digest
from .graph import KeyframePolicy
from .io import export_dataset, load_dataset, read_tum, save_graph, write_tum
from .metrics import TrajectoryPair, ate, map_rmse, start_end_error
from .pipeline import SlamConfig, aggregate_map_points, run_slam
from .planes import FilterConfig, RansacConfig
from .simulator import (
    LayoutSpec,
    NoiseSpec,
    RectSpec,
    ScanPattern,
    TrajectorySpec,
    generate_world,
    simulate_run,
)


def load_layout(path) -> tuple[LayoutSpec, TrajectorySpec, ScanPattern]:
    d = json.loads(Path(path).read_text())
    layout = LayoutSpec(
        rects=tuple(RectSpec(**r) for r in d["rects"]),
        wall_height=d.get("wall_height", 2.5),
    )
    t = d.get("trajectory", {})
    traj = TrajectorySpec(
        waypoints=tuple(tuple(w) for w in t.get("waypoints", [])),
        speed=t.get("speed", 1.0),
        scan_rate=t.get("scan_rate", 2.0),
        loops=t.get("loops", 1),
        sensor_height=t.get("sensor_height", 1.0),
    )
    p = d.get("pattern", {})
    pattern = ScanPattern(
        n_rings=p.get("n_rings", 16),
        n_azimuth=p.get("n_azimuth", 360),
        max_range=p.get("max_range", 50.0),
    )
    return layout, traj, pattern


def load_noise(path, seed: int) -> NoiseSpec:
    d = json.loads(Path(path).read_text())
    return NoiseSpec(
        trans_drift=d.get("trans_drift", 0.0),
        rot_drift=d.get("rot_drift", 0.0),
        range_sigma=d.get("range_sigma", 0.0),
        seed=seed,
    )


def load_slam_config(path) -> SlamConfig:
    if path is None:
        return SlamConfig()
    d = json.loads(Path(path).read_text())
    cfg = SlamConfig()
    if "keyframe" in d:
        cfg = replace(cfg, keyframe=KeyframePolicy(**d["keyframe"]))
    if "filter" in d:
        cfg = replace(cfg, filter=FilterConfig(**d["filter"]))
    if "ransac" in d:
        cfg = replace(cfg, ransac=RansacConfig(**d["ransac"]))
    for key in (
        "odom_sigma_t",
        "odom_sigma_r",
        "plane_sigma_angle",
        "plane_sigma_d",
        "topology_sigma",
        "association_gate",
        "min_plane_inlier_count",
        "enable_topology",
        "enable_loop_closure",
    ):
        if key in d:
            cfg = replace(cfg, **{key: d[key]})
    return cfg


def cmd_simulate(args) -> int:
    layout, traj, pattern = load_layout(args.layout)
    noise = load_noise(args.noise, args.seed)
    world = generate_world(layout)
    steps = simulate_run(world, traj, noise, pattern)
    export_dataset(args.out, world, steps)
    print(f"wrote {len(steps)} steps to {args.out} (digest {stream_digest(steps)[:12]})")
    return 0


def cmd_slam(args) -> int:
    world, steps = load_dataset(args.dataset)
    cfg = load_slam_config(args.config)
    if args.no_topology:
        cfg = replace(cfg, enable_topology=False)
    if args.no_loop_closure:
        cfg = replace(cfg, enable_loop_closure=False)
    elif args.loop_closure:
        cfg = replace(cfg, enable_loop_closure=True)
    result = run_slam(steps, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tum(out / "estimate.tum", result.trajectory)
    save_graph(out / "graph.json", result.graph)
    meta = {
        "dataset": str(Path(args.dataset).resolve()),
        "enable_topology": cfg.enable_topology,
        "enable_loop_closure": cfg.enable_loop_closure,
        "n_keyframes": len(result.graph.keyframes),
        "n_planes": len(result.graph.planes),
        "n_rooms": len(result.graph.rooms),
        "n_corridors": len(result.graph.corridors),
        "loop_constraints": result.loop_constraints,
        "final_cost": result.reports[-1].final_cost if result.reports else None,
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=1))
    print(json.dumps(meta, indent=1))
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    meta = json.loads((run_dir / "run_meta.json").read_text())
    world, steps = load_dataset(meta["dataset"])
    estimate = read_tum(run_dir / "estimate.tum")
    reference = [(s.timestamp, s.gt_pose) for s in steps]
    pair = TrajectoryPair(estimated=estimate, reference=reference)
    ate_val = ate(pair)

    # rebuild the optimized map from the estimate and the dataset scans
    from .io import load_graph

    graph = load_graph(run_dir / "graph.json")
    from .pipeline import SlamResult

    kf_steps = []
    import numpy as np

    step_times = np.array([s.timestamp for s in steps])
    for kf_id in sorted(graph.keyframes):
        kf = graph.keyframes[kf_id]
        idx = int(np.argmin(np.abs(step_times - kf.timestamp)))
        kf.scan = steps[idx].scan
    result = SlamResult(graph=graph)
    points = aggregate_map_points(result, steps)
    if points.shape[0]:
        # map points live in the estimate's frame; bring them into the
        # world frame with the same rigid alignment the ATE uses
        from .metrics import align_rigid, associate

        pairs = associate(estimate, reference, 0.25)
        T = align_rigid(
            np.array([p.translation for p, _ in pairs]),
            np.array([r.translation for _, r in pairs]),
        )
        points = points @ T.rotation.T + T.translation
        rmse = map_rmse(points, world)
    else:
        rmse = float("nan")
    t_err, r_err = start_end_error(estimate)
    report = {
        "ate": ate_val,
        "map_rmse": rmse,
        "map_rmse_cutoff": 0.5,
        "start_end_translation": t_err,
        "start_end_rotation_deg": r_err,
    }
    Path(args.report).write_text(json.dumps(report, indent=1))
    csv_path = Path(args.report).with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(report.keys())
        writer.writerow(report.values())
    print(json.dumps(report, indent=1))
    return 0


def parse_seeds(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def cmd_ablate(args) -> int:
    layout, traj, pattern = load_layout(args.layout)
    noise = load_noise(args.noise, 0)
    seeds = parse_seeds(args.seeds)
    report = run_ablation(layout, traj, noise, seeds, pattern=pattern)
    d = report.to_dict()
    Path(args.report).write_text(json.dumps(d, indent=1))
    csv_path = Path(args.report).with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "config", "ate", "n_planes", "n_duplicates"])
        for which, runs in (("full", report.full), ("without_topology", report.without_topology)):
            for seed, m in runs.items():
                writer.writerow([seed, which, m.ate, m.n_planes, m.n_duplicates])
    print(json.dumps({k: d[k] for k in d if k.startswith(("mean", "improvement"))}, indent=1))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sgraph")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--layout", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("slam", help="run the mapping pipeline on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--no-topology", action="store_true")
    p.add_argument("--no-loop-closure", action="store_true")
    p.add_argument("--loop-closure", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_slam)

    p = sub.add_parser("eval", help="compute metrics for a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="with/without-topology ablation study")
    p.add_argument("--layout", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--seeds", required=True, help="e.g. 1..10 or 1,2,3")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_ablate)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
