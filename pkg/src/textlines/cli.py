"""Command-line surface: detect, train, synth, eval.

Exit codes are stable: 0 success, 1 usage or configuration error, 2 I/O
error (missing or malformed files), 3 numeric failure (diverged training).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .blocks import extract_blocks
from .candidates import generate_all
from .config import RunConfig, coerce_kv, load_config
from .evaluate import load_ground_truth, match_axis_aligned, match_rotated, report
from .filtering import Detection, dark_blob_scorer, filter_pipeline
from .geometry import OrientedRect
from .imaging import (
    GrayImage,
    MalformedImageError,
    ProbabilityMap,
    UnsupportedDepthError,
    load_image,
    load_probability_map,
    save_image,
    save_probability_map,
)
from .mser import extract_components
from .saliency import (
    PixelNetConfig,
    corpus_loss,
    create_net,
    load_model,
    multi_scale_saliency,
    save_model,
    train,
)
from .synth import SynthSpec, write_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _NanLoss(Exception):
    pass


# ---------------------------------------------------------------------------
# detect


def _load_net(path):
    if not os.path.exists(path):
        raise CliError(EXIT_IO, f"model file not found: {path}")
    try:
        return load_model(path)
    except ValueError as exc:
        raise CliError(EXIT_IO, f"bad model file {path}: {exc}") from None


def _stem(path: str) -> str:
    name = os.path.basename(path)
    return name.rsplit(".", 1)[0] if "." in name else name


def _load_run_config(args) -> RunConfig:
    if getattr(args, "config", None) is None:
        return RunConfig()
    if not os.path.exists(args.config):
        raise CliError(EXIT_IO, f"config file not found: {args.config}")
    try:
        return load_config(args.config)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"invalid config: {exc}") from None


def _detections_payload(image_name: str, dets: list[Detection]) -> dict:
    records = []
    for det in dets:
        rec = {
            "corners": [[float(x), float(y)] for x, y in det.box.corners()],
            "angle": det.box.angle,
            "score": det.score,
        }
        if det.words is not None:
            rec["words"] = [
                [[float(x), float(y)] for x, y in w.corners()] for w in det.words
            ]
        records.append(rec)
    return {"schema": 1, "image": image_name, "detections": records}


def _read_detections(path) -> list[Detection]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_IO, f"bad detections file {path}: {exc}") from None
    if data.get("schema") != 1:
        raise CliError(EXIT_IO, f"unsupported schema in {path}")
    out = []
    for rec in data.get("detections", []):
        corners = np.asarray(rec["corners"], dtype=np.float64).reshape(4, 2)
        center = corners.mean(axis=0)
        length = float(np.hypot(*(corners[1] - corners[0])))
        thickness = float(np.hypot(*(corners[3] - corners[0])))
        box = OrientedRect((float(center[0]), float(center[1])), (length, thickness), float(rec["angle"]))
        out.append(Detection(box, float(rec["score"])))
    return out


def _draw_box(canvas: np.ndarray, box: OrientedRect) -> None:
    h, w = canvas.shape
    c = box.corners()
    for k in range(4):
        p, q = c[k], c[(k + 1) % 4]
        n = max(2, int(math.hypot(q[0] - p[0], q[1] - p[1]) * 2))
        ts = np.linspace(0.0, 1.0, n)
        xs = np.round(p[0] + ts * (q[0] - p[0])).astype(int)
        ys = np.round(p[1] + ts * (q[1] - p[1])).astype(int)
        ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        canvas[ys[ok], xs[ok]] = 255


def _dump_debug(debug_dir, stem, image, saliency, cfg: RunConfig, candidates):
    d = os.path.join(debug_dir, stem)
    os.makedirs(d, exist_ok=True)
    save_probability_map(saliency, os.path.join(d, "saliency.pgm"))
    blocks = extract_blocks(saliency, threshold=cfg.saliency_threshold, min_area=cfg.min_block_area)
    mask = np.zeros(image.data.shape, dtype=np.float64)
    lines = []
    for block in blocks:
        mask[block.pixels.pixels[:, 1], block.pixels.pixels[:, 0]] = 1.0
        for comp in extract_components(image, block, cfg.mser_params(), area_basis=cfg.area_basis):
            lines.append(
                f"block={block.id} polarity={comp.polarity} bbox={comp.bbox} "
                f"height={comp.height} centroid=({comp.centroid[0]:.2f},{comp.centroid[1]:.2f})\n"
            )
    save_probability_map(ProbabilityMap(mask), os.path.join(d, "blocks.pgm"))
    with open(os.path.join(d, "components.txt"), "w", encoding="utf-8") as fh:
        fh.writelines(lines)
    with open(os.path.join(d, "candidates.txt"), "w", encoding="utf-8") as fh:
        for cand in candidates:
            b = cand.box
            fh.write(
                f"{b.center[0]!r} {b.center[1]!r} {b.length!r} {b.thickness!r} "
                f"{b.angle!r} members={','.join(map(str, cand.group.members))}\n"
            )


def _detect_one(path, args, cfg: RunConfig, block_net, scorer):
    image = load_image(path)
    stem = _stem(path)
    if args.saliency_dir is not None:
        map_path = os.path.join(args.saliency_dir, stem + ".pgm")
        if not os.path.exists(map_path):
            raise CliError(EXIT_IO, f"saliency map not found: {map_path}")
        saliency = load_probability_map(map_path)
        if saliency.data.shape != image.data.shape:
            raise CliError(EXIT_IO, f"saliency map size mismatch for {path}")
    else:
        saliency = multi_scale_saliency(block_net, image, cfg.scale_heights)
    candidates = generate_all(
        image,
        saliency,
        threshold=cfg.saliency_threshold,
        min_block_area=cfg.min_block_area,
        mser_params=cfg.mser_params(),
        angle_step=cfg.angle_step,
        area_basis=cfg.area_basis,
        pair_angle_gate=cfg.pair_angle_gate,
    )
    dets = filter_pipeline(
        image, candidates, scorer, cfg.filter_params(), partition_words=args.words
    )
    return stem, image, saliency, candidates, dets


def cmd_detect(args) -> int:
    cfg = _load_run_config(args)
    if args.jobs < 1:
        raise CliError(EXIT_USAGE, "--jobs must be at least 1")
    block_net = None
    if args.saliency_dir is None:
        if args.model is None:
            raise CliError(EXIT_USAGE, "need --model or --saliency-dir")
        block_net = _load_net(args.model)
    if args.centroid_oracle:
        scorer = dark_blob_scorer
    elif args.centroid_model is not None:
        scorer = _load_net(args.centroid_model)
    else:
        raise CliError(EXIT_USAGE, "need --centroid-model or --centroid-oracle")
    os.makedirs(args.out, exist_ok=True)
    if args.jobs == 1:
        results = [_detect_one(p, args, cfg, block_net, scorer) for p in args.images]
    else:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = [
                pool.submit(_detect_one, p, args, cfg, block_net, scorer)
                for p in args.images
            ]
            results = [f.result() for f in futures]
    for (stem, image, saliency, candidates, dets), path in zip(results, args.images):
        payload = _detections_payload(os.path.basename(path), dets)
        with open(os.path.join(args.out, stem + ".json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
        if args.overlay:
            canvas = image.data.copy()
            for det in dets:
                _draw_box(canvas, det.box)
                for word in det.words or ():
                    _draw_box(canvas, word)
            save_image(GrayImage(canvas), os.path.join(args.out, stem + ".overlay.pgm"))
        if args.debug_dir is not None:
            _dump_debug(args.debug_dir, stem, image, saliency, cfg, candidates)
        print(f"{path}: {len(dets)} detections")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _load_corpus(root, stages: int):
    if not os.path.isdir(root):
        raise CliError(EXIT_IO, f"corpus directory not found: {root}")
    names = sorted(
        f for f in os.listdir(root) if f.endswith(".pgm") and not f.endswith(".gt.pgm")
    )
    if not names:
        raise CliError(EXIT_IO, f"no training pairs under {root}")
    unit = 2**stages
    corpus = []
    for name in names:
        stem = name[: -len(".pgm")]
        gt_path = os.path.join(root, stem + ".gt.pgm")
        if not os.path.exists(gt_path):
            raise CliError(EXIT_IO, f"missing ground truth for pair {stem}")
        image = load_image(os.path.join(root, name))
        gt = load_probability_map(gt_path)
        if gt.data.shape != image.data.shape:
            raise CliError(EXIT_IO, f"size mismatch in pair {stem}")
        h, w = image.data.shape
        ph = (unit - h % unit) % unit
        pw = (unit - w % unit) % unit
        if ph or pw:
            image = GrayImage(np.pad(image.data, ((0, ph), (0, pw)), mode="edge"))
            gt = ProbabilityMap(np.pad(gt.data, ((0, ph), (0, pw))))
        corpus.append((image, gt))
    return corpus


_KIND_DEFAULTS = {"block": (2, "8,12"), "centroid": (3, "6,10,14")}


def cmd_train(args) -> int:
    stages, channels = _KIND_DEFAULTS[args.kind]
    if args.stages is not None:
        stages = args.stages
    if args.channels is not None:
        channels = args.channels
    kind_dir = os.path.join(args.corpus, args.kind)
    root = kind_dir if os.path.isdir(kind_dir) else args.corpus
    corpus = _load_corpus(root, stages)
    try:
        cfg = PixelNetConfig(
            stage_count=stages,
            channels_per_stage=tuple(int(c) for c in channels.split(",")),
            learning_rate=args.lr,
            momentum=args.momentum,
            weight_decay=args.weight_decay,
            seed=args.seed,
        )
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"bad network settings: {exc}") from None
    net = create_net(cfg)
    print("step,loss")
    print(f"0,{corpus_loss(net, corpus):.6f}")

    def log(step, loss):
        print(f"{step},{loss:.6f}")
        if math.isnan(loss):
            raise _NanLoss()

    try:
        if args.iterations < 0:
            raise CliError(EXIT_USAGE, "iterations must be >= 0")
        net = train(net, corpus, args.iterations, log_fn=log, log_every=args.log_every)
    except _NanLoss:
        raise CliError(EXIT_NUMERIC, "training diverged: loss is NaN") from None
    if not np.isfinite(net.params).all():
        raise CliError(EXIT_NUMERIC, "training diverged: non-finite parameters")
    save_model(net, args.out)
    print(f"wrote model to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args) -> int:
    if args.count <= 0:
        raise CliError(EXIT_USAGE, "count must be positive")
    kwargs = {}
    if args.spec is not None:
        if not os.path.exists(args.spec):
            raise CliError(EXIT_IO, f"spec file not found: {args.spec}")
        with open(args.spec, "r", encoding="utf-8") as fh:
            try:
                kwargs = coerce_kv(SynthSpec, fh.read())
            except ValueError as exc:
                raise CliError(EXIT_USAGE, f"invalid spec: {exc}") from None
    if args.seed is not None:
        kwargs["seed"] = args.seed
    try:
        spec = SynthSpec(**kwargs)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"invalid spec: {exc}") from None
    write_corpus(spec, args.count, args.out)
    print(f"wrote {args.count} scenes to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    if not os.path.isdir(args.gt):
        raise CliError(EXIT_IO, f"ground-truth directory not found: {args.gt}")
    gt_names = sorted(f for f in os.listdir(args.gt) if f.endswith(".txt"))
    if not gt_names:
        raise CliError(EXIT_IO, f"no ground-truth files under {args.gt}")
    gt_stems = {name[:-4] for name in gt_names}
    if not os.path.isdir(args.dets):
        raise CliError(EXIT_IO, f"detections directory not found: {args.dets}")
    det_stems = {f[:-5] for f in os.listdir(args.dets) if f.endswith(".json")}
    extra = sorted(det_stems - gt_stems)
    if extra:
        raise CliError(EXIT_IO, f"unmatched detections file: {extra[0]}.json")
    match = match_rotated if args.protocol == "rotated" else match_axis_aligned
    images = []
    rows = []
    for name in gt_names:
        stem = name[:-4]
        try:
            gts = load_ground_truth(os.path.join(args.gt, name))
        except ValueError as exc:
            raise CliError(EXIT_IO, f"bad ground truth {name}: {exc}") from None
        det_path = os.path.join(args.dets, stem + ".json")
        dets = _read_detections(det_path) if os.path.exists(det_path) else []
        m = match(dets, gts)
        images.append(m)
        rows.append(
            {
                "name": stem,
                "det_count": m.det_count,
                "gt_count": m.gt_count,
                "matched": len(m.pairs),
            }
        )
    rep = report(images)
    print(f"protocol={args.protocol} images={len(images)}")
    print(
        f"precision={rep.precision:.4f} recall={rep.recall:.4f} "
        f"f_measure={rep.f_measure:.4f}"
    )
    if args.out is not None:
        payload = {
            "schema": 1,
            "protocol": args.protocol,
            "precision": rep.precision,
            "recall": rep.recall,
            "f_measure": rep.f_measure,
            "images": rows,
        }
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="textlines", description="Multi-oriented text line detection pipeline."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="detect text lines in images")
    d.add_argument("images", nargs="+", help="input images (PGM or PNG)")
    d.add_argument("-o", "--out", required=True, help="output directory for JSON")
    d.add_argument("--model", help="block saliency model (PXNET1 file)")
    d.add_argument("--saliency-dir", help="directory of precomputed <stem>.pgm maps")
    d.add_argument("--centroid-model", help="centroid model (PXNET1 file)")
    d.add_argument(
        "--centroid-oracle",
        action="store_true",
        help="score candidates from dark blobs instead of a trained net",
    )
    d.add_argument("--config", help="key=value run configuration file")
    d.add_argument("--words", action="store_true", help="partition lines into words")
    d.add_argument("--overlay", action="store_true", help="write overlay PGMs")
    d.add_argument("--debug-dir", help="dump per-stage intermediates here")
    d.add_argument("--jobs", type=int, default=1, help="parallel image workers")
    d.set_defaults(func=cmd_detect)

    t = sub.add_parser("train", help="train a pixel-labeling net")
    t.add_argument("corpus", help="corpus directory (flat pairs or block/centroid)")
    t.add_argument("--kind", required=True, choices=("block", "centroid"))
    t.add_argument("--out", required=True, help="model output path")
    t.add_argument("--iterations", type=int, default=2000)
    t.add_argument("--stages", type=int, default=None)
    t.add_argument("--channels", default=None, help="per-stage channels, e.g. 8,12")
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--weight-decay", type=float, default=1e-4)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--log-every", type=int, default=100)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("synth", help="write a synthetic labeled corpus")
    s.add_argument("--spec", help="key=value scene spec file")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--seed", type=int, default=None, help="override the spec seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="score detections against ground truth")
    e.add_argument("--dets", required=True, help="directory of <stem>.json files")
    e.add_argument("--gt", required=True, help="directory of <stem>.txt files")
    e.add_argument("--protocol", choices=("rotated", "axis"), default="rotated")
    e.add_argument("--out", help="write the report as JSON here")
    e.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except (MalformedImageError, UnsupportedDepthError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
