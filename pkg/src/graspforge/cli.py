"""Command-line entry point.

One executable with per-stage subcommands plus `pipeline` chaining them
all. Stage failures exit non-zero with the stage name and offending key;
configuration is validated before any work runs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataset as dataset_mod
from . import evaluation as eval_mod
from . import pipeline as pipe
from .geom import GripperSpec, Intrinsics, RigidTransform
from .matcher import CandidateGraspSet, candidate_pixels, select_by_pixel
from .registration import load_xyz, register_directory
from .util import write_json

STAGE_COMMANDS = dict(pipe.PIPELINE_STAGES)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graspforge",
        description="Task-oriented-grasping synthetic data pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    stage_names = [name for name, _ in pipe.PIPELINE_STAGES] + ["pipeline"]
    for name in stage_names:
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "pipeline"
                           else "run every stage in order")
        p.add_argument("--config", required=True, help="pipeline config (JSON or YAML)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--jobs", type=int, default=None, help="override parallelism limit")
        p.add_argument("--client", choices=["mock", "http"], default=None,
                       help="override annotation client")
        p.add_argument("--out", default=None, help="override output directory")

    p = sub.add_parser("register", help="batch point-cloud registration")
    p.add_argument("--input-dir", required=True,
                   help="directory of <stem>_partial.xyz / <stem>_fused.xyz pairs")
    p.add_argument("--out", required=True, help="output JSON path")
    p.add_argument("--gate", type=float, default=0.006,
                   help="accept threshold on mean residual (m)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("match-point", help="select the grasp nearest a predicted pixel")
    p.add_argument("--candidates", required=True,
                   help="JSON with gripper spec and camera-frame grasp poses")
    p.add_argument("--cloud", required=True, help="scene cloud (ASCII xyz, camera frame)")
    p.add_argument("--intrinsics", required=True, help="camera intrinsics JSON")
    p.add_argument("u", type=float)
    p.add_argument("v", type=float)

    p = sub.add_parser("eval", help="score a predictions file")
    p.add_argument("--predictions", required=True, help="predictions JSONL")
    p.add_argument("--manifest", default=None,
                   help="dataset samples.jsonl for key/truth cross-checking")
    p.add_argument("--group-by", default="verb", choices=["verb", "task"])
    p.add_argument("--out", default=None, help="write the report JSON here")

    return parser


def _load_stage_config(args) -> pipe.PipelineConfig:
    cfg = pipe.load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.client is not None:
        cfg.client = args.client
    if args.out is not None:
        cfg.out_dir = args.out
    cfg.validate_paths()
    return cfg


def _cmd_stage(args) -> int:
    cfg = _load_stage_config(args)
    if args.command == "pipeline":
        pipe.run_pipeline(cfg)
    else:
        print(f"[{args.command}] running")
        result = STAGE_COMMANDS[args.command](cfg)
        if args.command == "stats":
            _, records = dataset_mod.read_records(
                Path(cfg.out_dir) / "dataset" / "samples.jsonl")
            selected = pipe.read_selected_grasps(Path(cfg.out_dir) / "grasps.json")
            print(dataset_mod.stats(records, class_of=selected.class_of).summary())
        del result
    return 0


def _cmd_register(args) -> int:
    report = register_directory(args.input_dir, gate=args.gate, seed=args.seed)
    write_json(args.out, report)
    summary = report["summary"]
    print(f"registered {summary['n_pairs']} pairs: "
          f"{summary['n_accepted']} accepted, {summary['n_rejected']} rejected "
          f"(gate {summary['gate']} m)")
    return 0


def _cmd_match_point(args) -> int:
    spec = json.loads(Path(args.candidates).read_text())
    gripper_cfg = spec.get("gripper", {})
    for axis in ("approach_axis", "closing_axis"):
        if axis in gripper_cfg:
            gripper_cfg[axis] = np.asarray(gripper_cfg[axis], dtype=float)
    gripper = GripperSpec(**gripper_cfg)
    grasps = [(g["id"], RigidTransform.from_matrix(np.array(g["pose"], dtype=float)))
              for g in spec["grasps"]]
    intr = Intrinsics(**json.loads(Path(args.intrinsics).read_text()))
    candidates = CandidateGraspSet(grasps=grasps, gripper=gripper,
                                   cloud=load_xyz(args.cloud))
    prediction = np.array([args.u, args.v])
    pixels = candidate_pixels(candidates, intr)
    for grasp_id in sorted(pixels):
        pixel = pixels[grasp_id]
        if pixel is None:
            print(f"{grasp_id}: excluded (no cloud point in finger box)")
        else:
            d = float(np.linalg.norm(np.asarray(pixel) - prediction))
            print(f"{grasp_id}: pixel ({pixel[0]:.1f}, {pixel[1]:.1f}) distance {d:.2f} px")
    selected = select_by_pixel(pixels, prediction)
    print(f"selected: {selected}")
    return 0


def _cmd_eval(args) -> int:
    records = eval_mod.load_predictions(args.predictions)
    if args.manifest:
        _, samples = dataset_mod.read_records(args.manifest)
        truth_by_key = {
            f"{s.scene_id}/{s.view_id}/{s.instance_id}/{s.task_hash}": s.grasp_id
            for s in samples
        }
        for r in records:
            expected = truth_by_key.get(r.key)
            if expected is None:
                raise ValueError(f"prediction key {r.key!r} not in manifest")
            if expected != r.truth_id:
                raise ValueError(
                    f"prediction key {r.key!r}: truth {r.truth_id!r} "
                    f"disagrees with manifest {expected!r}")
    report = eval_mod.evaluate(records, group_by=args.group_by)
    print(report.table())
    if args.out:
        write_json(args.out, report.to_dict())
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command in STAGE_COMMANDS or args.command == "pipeline":
            return _cmd_stage(args)
        if args.command == "register":
            return _cmd_register(args)
        if args.command == "match-point":
            return _cmd_match_point(args)
        if args.command == "eval":
            return _cmd_eval(args)
        raise AssertionError(f"unhandled command {args.command}")
    except pipe.ConfigError as exc:
        print(f"error [{args.command}] config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
