"""Command-line entry point: gen-data, train, reconstruct, eval, gradcheck.

Every command is deterministic given identical inputs and seeds; a run
directory (config + dataset + checkpoints + mesh + metrics) reproduces
byte-identically from the config alone.

Exit codes: 0 ok, 2 IO/parse, 3 numeric failure, 4 empty boundary set,
5 empty mesh, 6 gradcheck failure.
"""

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import checks
from . import tensorcore as tc
from .dataset import Dataset
from .experiment import ExperimentConfig, load_config, save_config
from .fields import QuerySet, extract_boundary, sample_queries, sample_surface
from .meshing import ScalarGrid, marching_cubes, mise_extract, write_obj, read_obj
from .metrics import evaluate_reconstruction
from .model import (decode, encode, init_params, load_checkpoint,
                    occupancy_probability, save_checkpoint)
from .training import train_stage1, train_stage2, write_loss_trace

EXIT_OK = 0
EXIT_IO = 2
EXIT_NUMERIC = 3
EXIT_EMPTY_BOUNDARY = 4
EXIT_EMPTY_MESH = 5
EXIT_GRADCHECK = 6

DECODE_CHUNK = 65536


class EmptyBoundaryError(Exception):
    pass


class EmptyMeshError(Exception):
    pass


class GradcheckError(Exception):
    pass


def _threads():
    """Cap on optional data parallelism; the reference path stays at 1."""
    raw = os.environ.get("GRIDFORMER_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"GRIDFORMER_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ValueError(f"GRIDFORMER_THREADS must be >= 1, got {n}")
    return n


def _load_or_default_config(path, seed_override=None):
    cfg = load_config(path) if path else ExperimentConfig()
    if seed_override is not None:
        cfg = dataclasses.replace(
            cfg,
            data=dataclasses.replace(cfg.data, seed=seed_override),
            model=dataclasses.replace(cfg.model, seed=seed_override),
            train=dataclasses.replace(cfg.train, seed=seed_override),
            eval=dataclasses.replace(cfg.eval, seed=seed_override),
        )
    return cfg


def _ensure_out(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _field_evaluator(model_cfg, params, points):
    """Encode once, return a chunked tape-free probability evaluator."""
    dtype = np.float32 if model_cfg.precision == "f32" else np.float64

    def with_dtype(fn, *a):
        old = tc.get_default_dtype()
        tc.set_default_dtype(dtype)
        try:
            return fn(*a)
        finally:
            tc.set_default_dtype(old)

    field = with_dtype(encode, points, model_cfg, params)

    def evaluate(q):
        q = np.asarray(q, dtype=np.float64)
        out = []
        for lo in range(0, len(q), DECODE_CHUNK):
            logits = with_dtype(decode, field, q[lo:lo + DECODE_CHUNK],
                                model_cfg, params)
            out.append(occupancy_probability(logits).data.astype(np.float64))
        return np.concatenate(out) if out else np.zeros(0)

    return evaluate


def cmd_gen_data(args):
    cfg = _load_or_default_config(args.config, args.seed)
    out = _ensure_out(args.out)
    points = sample_surface(cfg.shape, cfg.data.n_points, sigma=cfg.data.sigma,
                            seed=cfg.data.seed).coords
    qs = sample_queries(cfg.shape, cfg.data.n_queries, seed=cfg.data.seed + 1)
    qs = extract_boundary(qs, cfg.train.boundary_radius)
    mask = qs.boundary_mask
    ds = Dataset(points=points.astype("<f4"), queries=qs.coords.astype("<f4"),
                 labels=qs.labels.astype("u1"), boundary_mask=mask.astype("u1"))
    ds.save(os.path.join(out, "dataset.gfds"))
    save_config(os.path.join(out, "config.json"), cfg)
    print(f"points {len(points)}")
    print(f"queries {len(qs.coords)}")
    print(f"boundary {int(mask.sum())}")
    return EXIT_OK


def cmd_train(args):
    cfg = _load_or_default_config(args.config, args.seed)
    out = _ensure_out(args.out)
    model_cfg = cfg.model
    if args.no_downsampling:
        model_cfg = dataclasses.replace(model_cfg, enable_downsampling=False)
    ds = Dataset.load(args.dataset)
    queryset = QuerySet(ds.queries, ds.labels,
                        None if ds.boundary_mask is None
                        else ds.boundary_mask.astype(bool))

    params = init_params(model_cfg)
    trace = train_stage1(ds.points, queryset, model_cfg, params, cfg.train)
    save_checkpoint(os.path.join(out, "checkpoint-stage1.gfck"), model_cfg, params)

    if not args.no_boundary_opt:
        if queryset.boundary_mask is None or not queryset.boundary_mask.any():
            raise EmptyBoundaryError(
                "dataset has no boundary-masked queries; rerun gen-data with a "
                "larger boundary radius or pass --no-boundary-opt"
            )
        trace += train_stage2(ds.points, queryset, model_cfg, params, cfg.train)
    save_checkpoint(os.path.join(out, "checkpoint-final.gfck"), model_cfg, params)
    write_loss_trace(os.path.join(out, "loss_trace.tsv"), trace)
    save_config(os.path.join(out, "config.json"),
                dataclasses.replace(cfg, model=model_cfg))
    print(f"steps {len(trace)}")
    print(f"final_loss {trace[-1][2]:.10g}")
    return EXIT_OK


def cmd_reconstruct(args):
    cfg = _load_or_default_config(args.config, args.seed)
    out = _ensure_out(args.out)
    model_cfg, params = load_checkpoint(args.checkpoint)
    ds = Dataset.load(args.dataset)
    evaluate = _field_evaluator(model_cfg, params, ds.points)

    mise = cfg.mesh
    if args.dense:
        res = mise.mise_initial_res * 2 ** mise.mise_steps
        axis = np.arange(res + 1) / res
        X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
        lattice = np.stack([X, Y, Z], axis=-1).reshape(-1, 3)
        values = evaluate(lattice).reshape(res + 1, res + 1, res + 1)
        mesh = marching_cubes(ScalarGrid(values, res), tau=mise.tau)
        n_evals = (res + 1) ** 3
    else:
        mesh, n_evals = mise_extract(evaluate, initial_res=mise.mise_initial_res,
                                     steps=mise.mise_steps, tau=mise.tau)
    if mesh.is_empty:
        raise EmptyMeshError(
            f"field never crosses tau={mise.tau}: no isosurface to extract"
        )
    write_obj(os.path.join(out, "mesh.obj"), mesh)
    print(f"vertices {len(mesh.vertices)}")
    print(f"triangles {len(mesh.triangles)}")
    print(f"field_evaluations {n_evals}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _load_or_default_config(args.config, args.seed)
    out = _ensure_out(args.out)
    mesh = read_obj(args.mesh)
    if mesh.is_empty:
        raise EmptyMeshError(f"{args.mesh}: mesh has no triangles")

    occupancy_fn = None
    if args.checkpoint and args.dataset:
        model_cfg, params = load_checkpoint(args.checkpoint)
        ds = Dataset.load(args.dataset)
        evaluate = _field_evaluator(model_cfg, params, ds.points)
        occupancy_fn = lambda q: (evaluate(q) > 0.5).astype(np.uint8)

    report = evaluate_reconstruction(
        mesh, cfg.shape, occupancy_fn=occupancy_fn,
        n_surface=cfg.eval.n_surface_samples, n_iou=cfg.eval.n_iou_queries,
        fscore_threshold=cfg.eval.fscore_threshold, seed=cfg.eval.seed,
    )
    text = report.to_text()
    with open(os.path.join(out, "metrics.txt"), "w") as f:
        f.write(text)
    print(text, end="")
    return EXIT_OK


def cmd_gradcheck(args):
    corrupt = os.environ.get("GRIDFORMER_GRADCHECK_CORRUPT", "0") == "1"
    report = checks.run_suite(trials=3, corrupt=corrupt)
    worst_name = max(report, key=report.get)
    for name in sorted(report):
        print(f"{name} {report[name]:.6e}")
    ok, offender = checks.suite_passes(report)
    print(f"worst {worst_name} {report[worst_name]:.6e}")
    if not ok:
        raise GradcheckError(f"gradcheck failed for {offender}: "
                             f"rel err {report[offender]:.6e}")
    print("all checks passed")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="gridformer",
        description="Point-grid transformer surface reconstruction",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True, out=True, seed=True):
        if config:
            sp.add_argument("--config", help="experiment config JSON")
        if out:
            sp.add_argument("--out", required=True, help="run directory")
        if seed:
            sp.add_argument("--seed", type=int, default=None,
                            help="override every section seed")

    sp = sub.add_parser("gen-data", help="sample a synthetic scene to GFDS")
    common(sp)
    sp.set_defaults(fn=cmd_gen_data)

    sp = sub.add_parser("train", help="two-stage training to checkpoints")
    common(sp)
    sp.add_argument("--dataset", required=True, help="GFDS dataset path")
    sp.add_argument("--no-boundary-opt", action="store_true",
                    help="skip the stage-2 boundary finetune")
    sp.add_argument("--no-downsampling", action="store_true",
                    help="ablation: keep every U-Net level at full resolution")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("reconstruct", help="extract a mesh from a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True, help="GFCK checkpoint path")
    sp.add_argument("--dataset", required=True, help="GFDS dataset path")
    sp.add_argument("--dense", action="store_true",
                    help="dense marching cubes instead of MISE")
    sp.set_defaults(fn=cmd_reconstruct)

    sp = sub.add_parser("eval", help="metrics for a reconstructed mesh")
    common(sp)
    sp.add_argument("--mesh", required=True, help="OBJ mesh path")
    sp.add_argument("--checkpoint", help="GFCK checkpoint for predicted IoU")
    sp.add_argument("--dataset", help="GFDS dataset (with --checkpoint)")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("gradcheck", help="gradient verification suite")
    sp.set_defaults(fn=cmd_gradcheck)

    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _threads()
        return args.fn(args)
    except EmptyBoundaryError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EMPTY_BOUNDARY
    except EmptyMeshError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EMPTY_MESH
    except GradcheckError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_GRADCHECK
    except FloatingPointError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
