"""Command-line entry point: ``silrefine <command> ...``.

Commands: ``corpus`` (write the built-in procedural meshes), ``synth``,
``refine``, ``ensemble``, ``eval`` and ``render``. Meshes come from
``--corpus`` or the ``SILREFINE_CORPUS`` directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from ..ensemble import Detection, ensemble_detections
from ..errors import SilrefineError
from ..geom import CameraIntrinsics, Pose, canonicalize_quaternion
from ..mesh import MeshCorpus, transform_to_screen
from ..metrics import ShapeTable, evaluate
from ..raster import BinaryMask, rasterize_hard, read_pgm, write_ppm
from ..refine import RefineConfig, geometric_state_init, refine_translation
from .corpus import write_default_corpus
from .io import PredictionFile, load_predictions, load_scenes, save_predictions
from .render import overlay, overlay_name, union_mask
from .synth import NoiseModel, SynthConfig, synth_generate, write_synth

CORPUS_ENV = "SILREFINE_CORPUS"
DEFAULT_INTRINSICS = {"fx": 320.0, "fy": 320.0, "cx": 128.0, "cy": 128.0, "width": 256, "height": 256}


class UsageError(Exception):
    pass


def _open_corpus(arg: Optional[str], required: bool = True) -> Optional[MeshCorpus]:
    root = arg or os.environ.get(CORPUS_ENV)
    if not root:
        if required:
            raise UsageError(f"no mesh corpus: pass --corpus or set {CORPUS_ENV} "
                             "(`silrefine corpus DIR` writes the built-in one)")
        return None
    return MeshCorpus(root)


def _read_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return raw


# --- corpus -----------------------------------------------------------------

def cmd_corpus(args) -> int:
    corpus = write_default_corpus(args.out)
    print(f"wrote {len(corpus)} meshes to {args.out}")
    return 0


# --- synth ------------------------------------------------------------------

def synth_settings(raw: dict) -> tuple[CameraIntrinsics, SynthConfig, NoiseModel]:
    """Split a synth config object into intrinsics, scene and noise settings.

    Keys: ``intrinsics`` (fx, fy, cx, cy, width, height), ``noise``
    (trans_frac, kind, rot_deg) and any ``SynthConfig`` field at top level.
    """
    raw = dict(raw)
    K = CameraIntrinsics.from_dict({**DEFAULT_INTRINSICS, **raw.pop("intrinsics", {})})
    noise = NoiseModel(**raw.pop("noise", {}))
    if "score_range" in raw:
        raw["score_range"] = tuple(raw["score_range"])
    try:
        cfg = SynthConfig(**raw)
    except TypeError as exc:
        raise UsageError(f"bad synth config: {exc}") from None
    return K, cfg, noise


def cmd_synth(args) -> int:
    corpus = _open_corpus(args.corpus)
    K, cfg, noise = synth_settings(_read_config(args.config))
    n = args.n_scenes if args.n_scenes is not None else cfg.n_scenes
    scenes = synth_generate(list(corpus.meshes()), K, n, noise, args.seed, cfg)
    scenes_path, preds_path = write_synth(scenes, args.out)
    print(f"wrote {len(scenes)} scenes: {scenes_path}, {preds_path}")
    return 0


# --- refine -----------------------------------------------------------------

def _refine_image(job):
    """Refine every detection of one image; runs in a worker process when ``--jobs > 1``."""
    image_id, dets, K_dict, corpus_root, cfg_dict, trace_dir = job
    corpus = MeshCorpus(corpus_root)
    K = CameraIntrinsics.from_dict(K_dict) if K_dict is not None else None
    cfg = RefineConfig.from_dict(cfg_dict)
    out, errors = [], []
    for k, det in enumerate(dets):
        try:
            if K is None:
                raise SilrefineError(f"image {image_id!r} has no scene entry")
            if det.mask_path is None:
                raise SilrefineError("detection has no mask reference")
            mesh = corpus.get(det.class_id)
            mask = read_pgm(det.mask_path)
            if mask.shape != (K.height, K.width):
                raise SilrefineError(f"mask {det.mask_path} is {mask.shape}, image is "
                                     f"{(K.height, K.width)}")
            R0 = canonicalize_quaternion(det.pose.rotation)
            probe = Detection(det.bbox, det.score, det.class_id, Pose(R0, det.pose.translation), mask)
            T0, source = geometric_state_init(probe, mesh, K, R0, det.pose.t)
            res = refine_translation(mesh, K, R0, T0, mask, cfg, source)
            if trace_dir is not None:
                res.write_trace(Path(trace_dir) / f"{image_id}_{k}.csv")
            new_pose = Pose(R0, tuple(float(v) for v in res.translation))
            out.append(det.with_pose(new_pose, float(res.best_iou)))
        except (SilrefineError, KeyError, OSError) as exc:
            msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
            errors.append({"image_id": image_id, "detection": k, "error": f"{type(exc).__name__}: {msg}"})
            out.append(det)
    return out, errors


def cmd_refine(args) -> int:
    corpus = _open_corpus(args.corpus)
    cfg = RefineConfig.from_dict(_read_config(args.config))
    pf = load_predictions(args.predictions)
    scenes = {s.image_id: s for s in load_scenes(args.scenes)} if args.scenes else {}
    trace_dir = None
    if args.trace_dir:
        trace_dir = str(Path(args.trace_dir))
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    jobs = [
        (img, dets, scenes[img].K.to_dict() if img in scenes else None, str(corpus.root),
         cfg.to_dict(), trace_dir)
        for img, dets in pf.images.items()
    ]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_refine_image, jobs))
    else:
        results = [_refine_image(j) for j in jobs]
    out = PredictionFile()
    for (img, _, _, _, _, _), (dets, errs) in zip(jobs, results):
        out.images[img] = dets
        out.errors.extend(errs)
    save_predictions(out, args.out)
    for e in out.errors:
        print(f"error: image {e['image_id']} detection {e['detection']}: {e['error']}", file=sys.stderr)
    n = sum(len(d) for d in out.images.values())
    print(f"refined {n - len(out.errors)}/{n} detections -> {args.out}")
    return 1 if out.errors else 0


# --- ensemble ---------------------------------------------------------------

def cmd_ensemble(args) -> int:
    files = [load_predictions(p) for p in args.inputs]
    n_votes = args.votes if args.votes is not None else len(files)
    if not 1 <= n_votes <= len(files):
        raise UsageError(f"--votes must lie in [1, {len(files)}]")
    images = []
    for f in files:
        images.extend(i for i in f.images if i not in images)
    out = PredictionFile()
    for img in images:
        outputs = [f.images.get(img, []) for f in files]
        out.images[img] = ensemble_detections(outputs, n_votes, args.vote_iou, args.nms_iou)
    save_predictions(out, args.out)
    n = sum(len(d) for d in out.images.values())
    print(f"merged {len(files)} files into {n} detections -> {args.out}")
    return 0


# --- eval -------------------------------------------------------------------

def default_z_fix(meshes, K: CameraIntrinsics) -> float:
    """Depth at which every mesh, at any yaw, fits in the central 80% of the frame."""
    r = max(float(np.max(np.linalg.norm(m.vertices, axis=1))) for m in meshes)
    f = max(K.fx, K.fy)
    return r + 2.0 * r * f / (0.8 * min(K.width, K.height))


def shape_table_for(corpus: Optional[MeshCorpus], class_ids, K: CameraIntrinsics) -> ShapeTable:
    if corpus is None:
        print("warning: no corpus; shape similarity is 1 for equal classes and 0 otherwise",
              file=sys.stderr)
        return ShapeTable.identity(sorted(class_ids))
    meshes = {cid: corpus.get(cid) for cid in sorted(class_ids)}
    z_fix = default_z_fix(meshes.values(), K)
    Kc = CameraIntrinsics(K.fx, K.fy, K.width / 2.0, K.height / 2.0, K.width, K.height)
    return ShapeTable.from_meshes(meshes, Kc, z_fix)


def cmd_eval(args) -> int:
    corpus = _open_corpus(args.corpus, required=False)
    pf = load_predictions(args.predictions)
    scenes = load_scenes(args.scenes)
    gts = {s.image_id: s.instances for s in scenes}
    class_ids = {g.class_id for v in gts.values() for g in v}
    class_ids |= {d.class_id for v in pf.images.values() for d in v}
    K = scenes[0].K if scenes else CameraIntrinsics.from_dict(DEFAULT_INTRINSICS)
    table = shape_table_for(corpus, class_ids, K) if class_ids else ShapeTable()
    report = evaluate(pf.images, gts, args.kind, args.interp, table)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
    print(report.table())
    return 0


# --- render -----------------------------------------------------------------

def cmd_render(args) -> int:
    corpus = _open_corpus(args.corpus)
    scenes = load_scenes(args.scenes, corpus)
    pf = load_predictions(args.predictions) if args.predictions else PredictionFile()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for s in scenes:
        K = s.K
        gt_masks = []
        for g, mp in zip(s.instances, s.mask_paths or [None] * len(s.instances)):
            if mp is not None:
                gt_masks.append(read_pgm(mp))
            else:
                mesh = corpus.by_name(g.mesh_name) if g.mesh_name else corpus.get(g.class_id)
                gt_masks.append(rasterize_hard(transform_to_screen(mesh, g.pose, K), K))
        rendered = [
            rasterize_hard(transform_to_screen(corpus.get(d.class_id), d.pose, K), K)
            for d in pf.images.get(s.image_id, [])
        ]
        ref = union_mask(gt_masks, K.width, K.height)
        ren = union_mask(rendered, K.width, K.height) if rendered else BinaryMask.empty(K.width, K.height)
        path = out_dir / overlay_name(s.image_id, ref, ren)
        try:
            write_ppm(overlay(ref, ren), path)
        except OSError as exc:
            raise OSError(f"{path}: {exc.strerror or exc}") from exc
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="silrefine", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def corpus_opt(sp):
        sp.add_argument("--corpus", help=f"mesh corpus directory (default: ${CORPUS_ENV})")

    c = sub.add_parser("corpus", help="write the built-in procedural mesh corpus")
    c.add_argument("out")
    c.set_defaults(func=cmd_corpus)

    s = sub.add_parser("synth", help="generate synthetic scenes and noisy predictions")
    corpus_opt(s)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--config", help="synth config JSON (intrinsics, noise, scene settings)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-scenes", type=int)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("refine", help="refine predicted translations against their masks")
    corpus_opt(r)
    r.add_argument("--predictions", required=True)
    r.add_argument("--scenes", required=True, help="scenes file supplying each image's intrinsics")
    r.add_argument("--out", required=True)
    r.add_argument("--config", help="RefineConfig JSON")
    r.add_argument("--trace-dir", help="write one trace CSV per detection here")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--seed", type=int, default=0, help="accepted for uniformity; refinement is deterministic")
    r.set_defaults(func=cmd_refine)

    e = sub.add_parser("ensemble", help="vote and merge several prediction files")
    e.add_argument("inputs", nargs="+")
    e.add_argument("--out", required=True)
    e.add_argument("--votes", type=int, help="models that must agree (default: all)")
    e.add_argument("--vote-iou", type=float, default=0.5)
    e.add_argument("--nms-iou", type=float, default=0.5)
    e.set_defaults(func=cmd_ensemble)

    v = sub.add_parser("eval", help="A3DP evaluation")
    corpus_opt(v)
    v.add_argument("--predictions", required=True)
    v.add_argument("--scenes", required=True)
    v.add_argument("--kind", choices=("abs", "rel"), default="abs")
    v.add_argument("--interp", type=int, choices=(11, 101),
                   help="recall levels (default: 101 for abs, 11 for rel)")
    v.add_argument("--out", help="JSON report path")
    v.set_defaults(func=cmd_eval)

    o = sub.add_parser("render", help="write GT/render overlay images")
    corpus_opt(o)
    o.add_argument("--scenes", required=True)
    o.add_argument("--predictions")
    o.add_argument("--out-dir", required=True)
    o.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (UsageError, SilrefineError, FileNotFoundError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
