"""Command-line driver: generate, train, predict, eval, augment, report.

Config files are JSON; explicit flags override config values. ``train`` and
``generate`` require ``--seed``. Every artifact records the effective
settings under a provenance key so runs can be reproduced.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .augment import AugmentSpec, extend_dataset
from .metrics import MetricsSummary, evaluate
from .pipeline import load_checkpoint, predict_dataset, save_checkpoint, train
from .scenedata import RunConfig, load_dataset, save_dataset
from .scoring import load_predictions, save_predictions
from .synthgen import ASYMMETRY_RULES, STANDARD_RULES, GenConfig, generate_dataset

PRESETS = {"standard": STANDARD_RULES, "asymmetry": ASYMMETRY_RULES}


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cutoff list {text!r}") from None
    if not ks or any(k <= 0 for k in ks) or ks != sorted(set(ks)):
        raise argparse.ArgumentTypeError("cutoffs must be positive and strictly ascending")
    return ks


def _write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def cmd_generate(args) -> int:
    cfg = _read_config(args.config)
    preset = cfg.pop("preset", None) or args.preset
    if preset and "rules" not in cfg:
        cfg["rules"] = [r.__dict__ for r in PRESETS[preset]]
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.scenes is not None:
        cfg["n_scenes"] = args.scenes
    if args.zipf is not None:
        cfg["zipf"] = args.zipf
    gen = GenConfig.from_dict(cfg)
    scenes, vocab = generate_dataset(gen)
    save_dataset(scenes, vocab, args.out, meta={"generator": gen.to_dict()})
    print(f"wrote {len(scenes)} scenes to {args.out}")
    return 0


def _run_config(args) -> RunConfig:
    cfg = _read_config(args.config)
    overrides = {
        "seed": args.seed,
        "epochs": args.epochs,
        "lr": args.lr,
        "beta": args.beta,
        "top_n": args.topn,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_re:
        cfg["use_relation_embedding"] = False
    if args.no_soe:
        cfg["use_subject_object_embeddings"] = False
    if args.no_rp:
        cfg["use_relation_possibility"] = False
    if args.symmetric:
        cfg["symmetric_scorer"] = True
    return RunConfig.from_dict(cfg)


def cmd_train(args) -> int:
    config = _run_config(args)
    scenes, vocab = load_dataset(args.data)
    model = train(config, scenes, vocab)
    save_checkpoint(model, args.out, provenance={"command": "train", "data": str(args.data), "config": config.to_dict()})
    last = model.trace[-1]
    print(f"trained {config.epochs} epochs; final loss {last['total']:.6f} (sc {last['l_sc']:.4f}, rp {last['l_rp']:.4f}, rc {last['l_rc']:.4f})")
    return 0


def _predict(args, scenes):
    model = load_checkpoint(args.ckpt)
    return predict_dataset(model, scenes, k=args.topk, workers=args.workers, beta=args.beta, top_n=args.topn)


def cmd_predict(args) -> int:
    scenes, _ = load_dataset(args.data)
    preds = _predict(args, scenes)
    save_predictions(preds, args.out)
    print(f"wrote predictions for {len(preds)} scenes to {args.out}")
    return 0


def cmd_eval(args) -> int:
    scenes, vocab = load_dataset(args.data)
    if args.pred:
        preds = load_predictions(args.pred)
        source = {"predictions": str(args.pred)}
    elif args.ckpt:
        args.topk = max(args.k)
        preds = _predict(args, scenes)
        source = {"checkpoint": str(args.ckpt), "beta": args.beta, "topn": args.topn}
    else:
        raise ValueError("one of --pred or --ckpt is required")
    summary = evaluate(preds, scenes, vocab, args.k)
    summary.provenance = {"command": "eval", "data": str(args.data), "k": args.k, **source}
    if args.out:
        _write_json(args.out, summary.to_dict())
    if args.csv:
        Path(args.csv).write_text(summary.to_csv())
    print(summary.format_table())
    return 0


def cmd_augment(args) -> int:
    scenes, vocab, meta = load_dataset(args.data, with_meta=True)
    spec = AugmentSpec.from_vocab(vocab, args.fraction, args.seed)
    out, report = extend_dataset(scenes, spec, vocab)
    meta = dict(meta or {})
    meta["augment"] = report
    save_dataset(out, vocab, args.out, meta=meta)
    print(json.dumps(report, sort_keys=True))
    if args.report:
        _write_json(args.report, report)
    return 0


def cmd_report(args) -> int:
    summary = MetricsSummary.from_dict(json.loads(Path(args.metrics).read_text()))
    print(summary.format_table())
    if args.csv:
        Path(args.csv).write_text(summary.to_csv())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rifa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="required unless the config sets it")
    p.add_argument("--preset", choices=sorted(PRESETS), default="standard")
    p.add_argument("--scenes", type=int)
    p.add_argument("--zipf", type=float)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="required unless the config sets it")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--topn", type=int)
    p.add_argument("--no-re", action="store_true", help="drop the relation (context) embedding")
    p.add_argument("--no-soe", action="store_true", help="drop subject/object embeddings from relation prediction")
    p.add_argument("--no-rp", action="store_true", help="drop relation possibility (loss and score)")
    p.add_argument("--symmetric", action="store_true", help="order-invariant scorer baseline")
    p.set_defaults(func=cmd_train)

    for name, func in (("predict", cmd_predict), ("eval", cmd_eval)):
        p = sub.add_parser(name, help=f"{name} with a trained checkpoint")
        p.add_argument("--data", required=True)
        p.add_argument("--ckpt", required=name == "predict")
        p.add_argument("--beta", type=float)
        p.add_argument("--topn", type=int)
        p.add_argument("--workers", type=int, default=1)
        if name == "predict":
            p.add_argument("--out", required=True)
            p.add_argument("--k", dest="topk", type=int, default=100, help="triples kept per scene")
        else:
            p.add_argument("--pred")
            p.add_argument("--out")
            p.add_argument("--csv")
            p.add_argument("--k", type=_parse_ks, default=[20, 50, 100])
        p.set_defaults(func=func)

    p = sub.add_parser("augment", help="add symmetric/inverse forms of annotations")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("report", help="render an eval JSON as tables/CSV")
    p.add_argument("--metrics", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=cmd_report)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("generate", "train") and args.seed is None:
        try:
            has_seed = "seed" in _read_config(args.config)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read --config: {exc}")
        if not has_seed:
            parser.error(f"{args.command}: --seed is required (directly or via --config)")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        print(f"rifa {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
