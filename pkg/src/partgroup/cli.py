"""Command line entry point: ``partgroup <command> [options]``.

Commands: gen-data, train, infer, eval, selftest, dump-attn.  Every model
and training config field is also a ``--flag``; precedence is profile
defaults < ``--config`` file < flags.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from .config import TrainConfig, build_configs, read_kv, train_config_text
from .network import ModelConfig

log = logging.getLogger("partgroup")


def _add_config_flags(p):
    p.add_argument("--profile", default="desk", choices=["desk", "paper"])
    p.add_argument("--config", type=Path, help="key = value file")
    grp = p.add_argument_group("config fields")
    for klass in (ModelConfig, TrainConfig):
        for f in fields(klass):
            grp.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, default=None,
                             metavar=type(f.default).__name__.upper())


def _configs(args):
    file_values = read_kv(args.config) if args.config else {}
    cli_values = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return build_configs(args.profile, file_values, cli_values)


def _split_paths(data: Path):
    data = Path(data)
    if data.is_dir():
        ann, kps = data / "annotations.json", data / "keypoints.json"
    else:
        ann, kps = data, data.with_name("keypoints.json")
    if not ann.exists():
        raise FileNotFoundError(f"annotation file not found: {ann}")
    return ann, (kps if kps.exists() else None)


def _load(data):
    from .data import load_split
    ann, kps = _split_paths(data)
    return load_split(ann, kps)


# -- commands ---------------------------------------------------------------------------

def cmd_gen_data(args):
    from .data import SynthSpec, generate_synthetic, write_synthetic
    spec = SynthSpec(num_scenes=args.num_scenes, image_size=args.image_size, seed=args.seed)
    scenes = generate_synthetic(spec)
    ann, kps = write_synthetic(scenes, args.out)
    print(f"wrote {len(scenes)} scenes: {ann} {kps}")
    return 0


def cmd_train(args):
    from .plotting import plot_loss_curves
    from .train import train
    mcfg, tcfg = _configs(args)
    scenes = _load(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(mcfg.to_text() + train_config_text(tcfg))
    _, lines = train(mcfg, tcfg, scenes, out_dir=out, resume=args.resume)
    all_lines = (out / "train.log").read_text().splitlines()
    if all_lines:
        plot_loss_curves(all_lines, out / "loss_curves.png")
    print(lines[-1] if lines else "no steps run")
    print(f"checkpoint: {out / 'checkpoint_last.pt'}")
    return 0


def _model_and_cfg(args):
    from .train import load_checkpoint
    model, mcfg, state = load_checkpoint(args.checkpoint)
    tcfg = state["train_config_obj"]
    if args.nms_threshold is not None:
        tcfg = replace(tcfg, nms_threshold=args.nms_threshold)
    return model, mcfg, tcfg


def cmd_infer(args):
    from .inference import write_predictions
    from .train import images_tensor, predict
    model, _, tcfg = _model_and_cfg(args)
    scenes = _load(args.data)
    triplets = predict(model, images_tensor(scenes), tcfg, batch_size=args.batch_size)
    write_predictions(args.out, [(s.image_id, s.width, s.height, ts)
                                 for s, ts in zip(scenes, triplets)])
    print(f"wrote {sum(map(len, triplets))} triplets for {len(scenes)} images to {args.out}")
    return 0


def cmd_eval(args):
    from .data import CLASS_NAMES, scene_triplets
    from .evaluation import evaluate
    from .inference import read_predictions
    from .plotting import plot_class_recall
    preds = read_predictions(args.pred)
    scenes = _load(args.gt)
    gts = {s.image_id: scene_triplets(s) for s in scenes}
    report = evaluate(preds, gts, class_names=CLASS_NAMES)
    sys.stdout.write(report.to_text(per_class=args.per_class))
    report_path = Path(args.report) if args.report else Path(args.pred).with_suffix(".metrics.txt")
    report_path.write_text(report.to_kv())
    fig = plot_class_recall(report, report_path.with_suffix(".png"))
    print(f"report: {report_path}\nfigure: {fig}")
    return 0


def cmd_selftest(args):
    from .selftest import run_all
    ok = run_all()
    print("selftest " + ("passed" if ok else "FAILED"))
    return 0 if ok else 1


def cmd_dump_attn(args):
    import torch

    from .partmask import PART_NAMES
    from .plotting import save_attention_maps
    from .train import images_tensor
    model, mcfg, _ = _model_and_cfg(args)
    scenes = _load(args.data)
    if args.image_id is not None:
        picked = [s for s in scenes if s.image_id == args.image_id]
        if not picked:
            raise KeyError(f"image id {args.image_id!r} not in {args.data}")
    else:
        picked = scenes[:args.num_images]
    model.eval()
    names = PART_NAMES if mcfg.num_parts == len(PART_NAMES) else None
    out = Path(args.out)
    written = 0
    with torch.no_grad():
        emb, pred = model(images_tensor(picked))
    for b, s in enumerate(picked):
        # most confident individual queries first
        order = pred.objectness[b].argsort(descending=True)[:args.top]
        for rank, q in enumerate(order.tolist()):
            paths = save_attention_maps(emb.part_attn[b, q].numpy(), out / s.image_id,
                                        prefix=f"rank{rank}_q{q:02d}_", part_names=names)
            written += len(paths)
    print(f"wrote {written} attention maps under {out}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="partgroup", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic split")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--num-scenes", type=int, default=64)
    p.add_argument("--image-size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True, type=Path, help="split directory or annotation file")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--resume", type=Path)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="write triplet predictions")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--nms-threshold", type=float)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--per-class", action="store_true")
    p.add_argument("--report", type=Path, help="key=value report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("selftest", help="run every oracle cross-check")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("dump-attn", help="write part attention maps as grayscale PNGs")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--image-id")
    p.add_argument("--num-images", type=int, default=1)
    p.add_argument("--top", type=int, default=3, help="individual queries per image")
    p.add_argument("--nms-threshold", type=float)
    p.set_defaults(func=cmd_dump_attn)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, KeyError, ValueError) as exc:
        print(f"partgroup {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
