"""Train on an exported token tree and generate new trees from the root.

`train` consumes a token stream ("ARGT") plus a matching attention mask
("ARGM"), writes a JSON step log and a model checkpoint; `generate` loads the
checkpoint and emits a generated "ARGT" consumable by the core toolkit."""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .formats import read_mask, read_tokens, write_tokens
from .generate import generate
from .model import NextScaleModel
from .training import evaluate, fit, prepare_batch


def cmd_train(args) -> int:
    tokens, ranges, _ = read_tokens(args.tokens)
    mask, variant = read_mask(args.mask)
    config = ModelConfig(
        layers=args.layers,
        embed_dim=args.embed_dim,
        heads=args.heads,
        noise_ratio=args.noise_ratio,
        mask_variant=variant,
    )
    torch.manual_seed(args.seed)
    model = NextScaleModel(config)
    batch = prepare_batch(tokens, mask, ranges)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log = fit(
        model,
        batch,
        steps=args.steps,
        lr=args.lr,
        seed=args.seed,
        log_path=out / "train_log.json",
        stop_at=(args.stop_splittable, args.stop_attribute) if args.stop_splittable else None,
    )
    final = evaluate(model, batch)
    torch.save(
        {"config": config.__dict__, "state": model.state_dict()}, out / "model.pt"
    )
    (out / "train_summary.json").write_text(
        json.dumps({"steps_run": len(log), "final": final}, indent=2, sort_keys=True) + "\n"
    )
    print(out / "model.pt")
    print(out / "train_log.json")
    return 0


def cmd_generate(args) -> int:
    checkpoint = torch.load(args.model, weights_only=False)
    config = ModelConfig(**checkpoint["config"])
    model = NextScaleModel(config)
    model.load_state_dict(checkpoint["state"])
    tokens, ranges, depth = read_tokens(args.tokens)
    root = next(t for t in tokens if t.parent_id is None)
    generated, passes = generate(
        model,
        root.bins,
        ranges,
        max_levels=args.max_levels if args.max_levels is not None else depth,
        greedy=not args.sample,
        temperature=args.temperature,
        seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    out_path = out / "generated.argt"
    write_tokens(generated, ranges, max(t.level for t in generated), out_path)
    (out / "generate.json").write_text(
        json.dumps(
            {"tokens": len(generated), "forward_passes": passes}, indent=2, sort_keys=True
        )
        + "\n"
    )
    print(out_path)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="splattrainer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train")
    p.add_argument("tokens")
    p.add_argument("mask")
    p.add_argument("--out", default="trainer_out")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--embed-dim", type=int, default=120)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--noise-ratio", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stop-splittable", type=float, default=None)
    p.add_argument("--stop-attribute", type=float, default=0.95)

    p = sub.add_parser("generate")
    p.add_argument("model")
    p.add_argument("tokens", help="token file providing the root token and ranges")
    p.add_argument("--out", default="trainer_out")
    p.add_argument("--max-levels", type=int, default=None)
    p.add_argument("--sample", action="store_true")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    if args.command == "train":
        return cmd_train(args)
    return cmd_generate(args)


if __name__ == "__main__":
    sys.exit(main())
