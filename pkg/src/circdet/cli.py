"""``circdet`` command-line harness.

Exit codes: 0 success, 1 check failure, 2 usage or input-format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import attention as att
from .checks import SUITES, run_suites
from .errors import CircdetError
from .evaluation import ap_summary
from .fileio import (read_annotations, read_fgrc, read_fgrid, read_predictions, write_annotations, write_fgrc,
                     write_fgrid, write_json, write_predictions)
from .optimize import LOSS_KINDS, initial_predictions, optimize_circles
from .synth import GenConfig, generate_scene
from .types import Circle

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2
DEFAULT_LR = 2e-5


class UsageError(Exception):
    pass


def _scene_name(image_id: int) -> str:
    return f"scene_{image_id:04d}.fgrid"


def _load_config(path: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at character {exc.pos}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return doc


def cmd_gen(args) -> int:
    doc = _load_config(args.config)
    n_scenes = int(doc.get("n_scenes", 0))
    if n_scenes < 0:
        raise UsageError("n_scenes must be non-negative")
    try:
        cfg = GenConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad generator config: {exc}") from None
    out = Path(args.out)
    (out / "grids").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    images, circles, entries = [], {}, []
    for image_id in range(n_scenes):
        truth, grid = generate_scene(cfg, image_id)
        write_fgrid(out / "grids" / _scene_name(image_id), grid)
        write_fgrid(out / "masks" / _scene_name(image_id), np.moveaxis(truth.masks, 0, -1).astype(np.float32))
        images.append({"id": image_id, "h": truth.height, "w": truth.width})
        circles[image_id] = truth.circles
        entries.append({"image_id": image_id, "grid": f"grids/{_scene_name(image_id)}",
                        "masks": f"masks/{_scene_name(image_id)}", "n_circles": len(truth.circles)})
    write_annotations(out / "annotations.json", images, circles)
    write_json(out / "index.json", {"config": cfg.to_dict(), "n_scenes": n_scenes,
                                    "annotations": "annotations.json", "scenes": entries})
    print(f"wrote {n_scenes} scene(s) to {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = run_suites(names, args.seed, args.trials, args.sabotage)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


def _annotations_path(scene: Path) -> Path:
    return scene / "annotations.json" if scene.is_dir() else scene


def _pick_image(images: list[dict], image_id) -> dict:
    if not images:
        raise UsageError("scene has no images")
    if image_id is None:
        return images[0]
    for im in images:
        if im["id"] == image_id:
            return im
    raise UsageError(f"image {image_id} not found in scene")


def _normalize(c: Circle, h: int, w: int) -> Circle:
    return Circle(c.x / w, c.y / h, c.r / min(h, w))


def cmd_optimize(args) -> int:
    images, circles = read_annotations(_annotations_path(Path(args.scene)))
    im = _pick_image(images, args.image)
    gts = [_normalize(c, im["h"], im["w"]) for c in circles.get(im["id"], [])]
    preds = initial_predictions(gts)
    if len(preds) < len(gts):
        raise UsageError(f"only {len(preds)} disjoint initial predictions for {len(gts)} ground truths")
    result = optimize_circles(gts, preds, args.loss, args.steps, args.lr)
    report = result.to_dict()
    report["image_id"] = im["id"]
    report["n_gt"] = len(gts)
    write_json(args.out, report)
    print(f"loss={args.loss} steps={args.steps} lr={args.lr:g} final_loss={report['final_loss']:.6g} "
          f"final_mean_ciou={result.final_mean_ciou:.6f}")
    return EXIT_OK


def _load_grid(scene: Path, image_id) -> tuple[int, np.ndarray]:
    if not scene.is_dir():
        return (0 if image_id is None else image_id), read_fgrid(scene)
    index = json.loads((scene / "index.json").read_text(encoding="utf-8"))
    entries = index.get("scenes", [])
    if not entries:
        raise UsageError(f"{scene} contains no scenes")
    if image_id is None:
        entry = entries[0]
    else:
        matches = [e for e in entries if e["image_id"] == image_id]
        if not matches:
            raise UsageError(f"image {image_id} not found in {scene}")
        entry = matches[0]
    return entry["image_id"], read_fgrid(scene / entry["grid"])


def cmd_forward(args) -> int:
    image_id, grid = _load_grid(Path(args.scene), args.image)
    F = att.FeatureGrid(grid)
    if args.weights and Path(args.weights).exists():
        weights = att.DecoderWeights.from_tensors(read_fgrc(args.weights))
    elif args.weights:
        raise UsageError(f"weights file {args.weights} does not exist")
    else:
        weights = att.init_decoder_weights(dim=F.depth, n_layers=args.layers, heads=args.heads, points=args.points,
                                           n_queries=args.queries, init=args.init, seed=args.seed)
    final, history = att.run_decoder(weights.initial_queries(), F, weights, args.layers, args.variant)
    scores = att.query_scores(final, weights.score_head)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "anchors.json", {
        "variant": args.variant, "init": args.init, "seed": args.seed, "image_id": image_id,
        "layers": [a.tolist() for a in history],
    })
    h, w = F.height, F.width
    dets = [(Circle(q.anchor.x * w, q.anchor.y * h, q.anchor.r * min(h, w)), float(s)) for q, s in zip(final, scores)]
    write_predictions(out / "predictions.json", {image_id: dets})
    if args.save_weights:
        write_fgrc(out / args.save_weights, weights.to_tensors())
    print(f"ran {len(history)} layer(s) on {len(final)} queries; outputs in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    _, truths = read_annotations(args.gt)
    preds = read_predictions(args.pred)
    report = ap_summary(preds, truths)
    write_json(args.out, report.to_dict())
    print(" ".join(f"{k}={getattr(report, k):.6f}" for k in ("AP", "AP50", "AP75", "AP_S", "AP_M")))
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circdet", description="Circle detection geometry, matching and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--config", required=True, help="JSON with GenConfig fields and n_scenes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("check", help="run oracle-backed verification suites")
    p.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--sabotage", action="store_true", help="inject a sign fault; the run must fail")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("optimize", help="gradient descent on circle predictions")
    p.add_argument("--loss", choices=LOSS_KINDS, default="gciou")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=DEFAULT_LR, help="step size in normalized units")
    p.add_argument("--scene", required=True, help="dataset directory or annotations JSON")
    p.add_argument("--image", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("forward", help="run the circle decoder on a feature grid")
    p.add_argument("--weights", default=None, help="FGRC bundle; seeded weights when omitted")
    p.add_argument("--scene", required=True, help="dataset directory or FGRID file")
    p.add_argument("--image", type=int, default=None)
    p.add_argument("--layers", type=int, default=6)
    p.add_argument("--variant", choices=["dense", "deformable"], default="deformable")
    p.add_argument("--init", choices=["cda-r", "cda-c"], default="cda-c")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--points", type=int, default=4)
    p.add_argument("--save-weights", default=None, help="write the weights used, relative to --out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("eval", help="score predictions with AP")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, CircdetError, OSError, ValueError, KeyError) as exc:
        print(f"circdet {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
