"""Pipeline driver: every stage as a subcommand, file outputs only.

Exit codes: 0 success, 2 usage, 3 file-format failure, 4 numerical
degeneracy, 5 other toolkit error, 1 unexpected failure or failed verify.
Config precedence is flags > config file (key=value lines) > defaults; the
ARGS_THREADS environment variable caps render worker counts.
"""

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io as sio
from . import verify as verify_mod
from .errors import (
    DegenerateMergeError,
    FormatError,
    NumericalDegeneracyError,
    SplatLodError,
)
from .hierarchy import build_tree, stats, to_text
from .masks import build_mask, decode_cost, to_text_grid
from .metrics import psnr, ssim
from .plots import save_metrics_figure
from .render import orbit_cameras, render
from .simplify import GaussianSet, SimplifyConfig, apply_sequence, expand, simplify
from .tokens import dequantize, fit_quant_spec, tokenize_tree

DEFAULT_SIZE = "96x96"
DEFAULT_LEVELS = "100,75,50,25,10"


def _write_json(payload: dict, path: Path) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _outdir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _parse_size(size: str) -> tuple[int, int]:
    w, _, h = size.partition("x")
    return int(w), int(h)


def _node_corpus(tree) -> GaussianSet:
    return GaussianSet.from_gaussians(tree.nodes[i].payload for i in sorted(tree.nodes))


def _worker_count(requested: int) -> int:
    cap = os.environ.get("ARGS_THREADS")
    if cap:
        requested = min(requested, max(1, int(cap)))
    return max(1, requested)


# ---------------------------------------------------------------------------
# stages (plain functions so `pipeline` is literally their composition)


def stage_ingest(input_path: str, out: str) -> list[Path]:
    out_dir = _outdir(out)
    gset = sio.load_ply(input_path)
    ply = out_dir / "ingested.ply"
    sio.save_ply(gset, ply)
    extra = len(gset.payload(gset.active_ids()[0]).features) - 3 if gset.active_count else 0
    info = _write_json({"count": gset.active_count, "extra_sh": extra}, out_dir / "ingest.json")
    return [ply, info]


def stage_simplify(
    input_path: str, out: str, target: int, beta: float, reference_scan: bool
) -> list[Path]:
    out_dir = _outdir(out)
    gset = sio.load_ply(input_path)
    n = gset.active_count
    seq = simplify(gset, target, SimplifyConfig(beta=beta, reference_scan=reference_scan))
    seq_path = out_dir / "sequence.args"
    sio.save_sequence(seq, seq_path)
    ply = out_dir / "simplified.ply"
    sio.save_ply(gset, ply)
    info = _write_json(
        {"source_count": n, "target": target, "records": len(seq.records), "beta": beta},
        out_dir / "simplify.json",
    )
    return [seq_path, ply, info]


def stage_expand(input_path: str, sequence_path: str, out: str, steps: int | None) -> list[Path]:
    out_dir = _outdir(out)
    seq = sio.load_sequence(sequence_path)
    if steps is None:
        steps = len(seq.records)
    end_state = apply_sequence(sio.load_ply(input_path), seq)
    restored = expand(end_state, seq, steps)
    ply = out_dir / "expanded.ply"
    sio.save_ply(restored, ply)
    info = _write_json(
        {"steps": steps, "count": restored.active_count}, out_dir / "expand.json"
    )
    return [ply, info]


def stage_hierarchy(sequence_path: str, out: str) -> list[Path]:
    out_dir = _outdir(out)
    tree = build_tree(sio.load_sequence(sequence_path))
    tree_path = out_dir / "tree.txt"
    tree_path.write_text(to_text(tree))
    info = _write_json(stats(tree), out_dir / "hierarchy.json")
    return [tree_path, info]


def stage_tokenize(
    sequence_path: str, out: str, spec_from: str, corpus: list[str]
) -> list[Path]:
    out_dir = _outdir(out)
    tree = build_tree(sio.load_sequence(sequence_path))
    corpora = [_node_corpus(tree)]
    if spec_from == "corpus":
        for extra in corpus:
            corpora.append(_node_corpus(build_tree(sio.load_sequence(extra))))
    spec = fit_quant_spec(corpora)
    tokens = tokenize_tree(tree, spec)
    tok_path = out_dir / "tokens.argt"
    sio.save_tokens(tokens, spec, tree.depth(), tok_path)
    info = _write_json(
        {
            "nodes": len(tokens),
            "depth": tree.depth(),
            "splittable": sum(1 for t in tokens if t.splittable),
            "spec_from": spec_from,
        },
        out_dir / "tokenize.json",
    )
    return [tok_path, info]


def stage_masks(sequence_path: str, out: str, variant: str) -> list[Path]:
    out_dir = _outdir(out)
    tree = build_tree(sio.load_sequence(sequence_path))
    tokens = tokenize_tree(tree, fit_quant_spec(_node_corpus(tree)))
    variants = ["causal", "levelwise", "tree"] if variant == "all" else [variant]
    written = []
    costs = {}
    for name in variants:
        mask = build_mask(name, tokens, tree)
        bin_path = out_dir / f"mask_{name}.argm"
        sio.save_mask(mask, bin_path)
        txt_path = out_dir / f"mask_{name}.txt"
        txt_path.write_text(to_text_grid(mask))
        written += [bin_path, txt_path]
        costs[name] = decode_cost(tree, name)
    written.append(_write_json({"n": len(tokens), "decode_cost": costs}, out_dir / "masks.json"))
    return written


def stage_render(
    input_path: str, out: str, views: int, size: str, workers: int, orbit_from: str | None = None
) -> list[Path]:
    out_dir = _outdir(out)
    gset = sio.load_ply(input_path)
    width, height = _parse_size(size)
    workers = _worker_count(workers)
    rig_source = sio.load_ply(orbit_from) if orbit_from else gset
    written = []
    for k, cam in enumerate(orbit_cameras(rig_source, count=views, width=width, height=height)):
        image = render(gset, cam, workers=workers)
        path = out_dir / f"view_{k:02d}.ppm"
        sio.save_ppm(image, path)
        written.append(path)
    written.append(
        _write_json(
            {"views": views, "size": size, "count": gset.active_count},
            out_dir / "render.json",
        )
    )
    return written


def stage_metrics(
    input_path: str, out: str, levels: str, views: int, size: str, workers: int
) -> list[Path]:
    out_dir = _outdir(out)
    base = sio.load_ply(input_path)
    n = base.active_count
    width, height = _parse_size(size)
    workers = _worker_count(workers)
    percents = [int(p) for p in levels.split(",")]
    counts = {pct: max(1, min(n, math.ceil(n * pct / 100.0))) for pct in percents}

    work = base.clone()
    seq = simplify(work, min(counts.values()))
    cams = orbit_cameras(base, count=views, width=width, height=height)
    reference = [render(base, cam, workers=workers) for cam in cams]

    name = Path(input_path).stem
    rows = []
    written = []
    for pct in percents:
        steps = counts[pct] - (n - len(seq.records))
        level_set = expand(work, seq, steps)
        renders = [render(level_set, cam, workers=workers) for cam in cams]
        rows.append(
            {
                "object": name,
                "level": pct,
                "psnr": float(np.mean([psnr(r, g) for r, g in zip(reference, renders)])),
                "ssim": float(np.mean([ssim(r, g) for r, g in zip(reference, renders)])),
            }
        )
        preview = out_dir / f"preview_l{pct:03d}.ppm"
        sio.save_ppm(renders[0], preview)
        written.append(preview)

    csv_path = out_dir / "metrics.csv"
    lines = ["object,level,psnr,ssim"]
    lines += [f"{r['object']},{r['level']},{r['psnr']:.6f},{r['ssim']:.6f}" for r in rows]
    csv_path.write_text("\n".join(lines) + "\n")
    fig_path = out_dir / "metrics.png"
    save_metrics_figure(rows, fig_path)
    summary = _write_json(
        {"levels": {str(r["level"]): {"psnr": round(r["psnr"], 6), "ssim": round(r["ssim"], 6)} for r in rows}},
        out_dir / "metrics.json",
    )
    return [csv_path, fig_path, summary] + written


def stage_decode(tokens_path: str, out: str, level: int | None) -> list[Path]:
    out_dir = _outdir(out)
    tokens, spec, depth = sio.load_tokens(tokens_path)
    if level is None:
        level = depth
    has_children = {t.parent_id for t in tokens if t.parent_id is not None}
    frontier = [
        t
        for t in tokens
        if t.level <= level and (t.node_id not in has_children or t.level == level)
    ]
    gset = GaussianSet.from_gaussians(dequantize(t.bins, spec) for t in frontier)
    ply = out_dir / "decoded.ply"
    sio.save_ply(gset, ply)
    info = _write_json({"level": level, "count": gset.active_count}, out_dir / "decode.json")
    return [ply, info]


def stage_pipeline(
    input_path: str,
    out: str,
    target: int,
    beta: float,
    views: int,
    size: str,
    levels: str,
    workers: int,
) -> list[Path]:
    out_dir = _outdir(out)
    written = stage_ingest(input_path, out)
    ingested = str(out_dir / "ingested.ply")
    written += stage_simplify(ingested, out, target, beta, False)
    sequence = str(out_dir / "sequence.args")
    if target == 1:
        written += stage_hierarchy(sequence, out)
        written += stage_tokenize(sequence, out, "object", [])
        written += stage_masks(sequence, out, "all")
    written += stage_render(ingested, out, views, size, workers)
    written += stage_metrics(ingested, out, levels, views, size, workers)
    return written


def stage_verify(out: str, seed: int) -> tuple[list[Path], int]:
    out_dir = _outdir(out)
    report = verify_mod.run_all(seed)
    path = _write_json(report, out_dir / "verify.json")
    for check in report["checks"]:
        status = "PASS" if check["passed"] else "FAIL"
        print(f"{status} {check['name']}: {check['detail']}")
    return [path], report["failures"]


# ---------------------------------------------------------------------------
# argument plumbing


def _load_config(path: str | None) -> dict[str, str]:
    if not path:
        return {}
    config = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        config[key.strip()] = value.strip()
    return config


def _resolve(args, name: str, cast, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    raw = args._config.get(name)
    if raw is None:
        return default
    if cast is bool:
        return raw.lower() in ("1", "true", "yes")
    return cast(raw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splatlod",
        description="Reversible Gaussian-splat simplification, hierarchy, tokens, masks, and fidelity reports.",
    )
    parser.add_argument("--config", help="key=value config file (flags win)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", default="out", help="output directory")
        return p

    p = add("ingest", "normalize a splat PLY checkpoint")
    p.add_argument("input")

    p = add("simplify", "build a reversible merge sequence")
    p.add_argument("input")
    p.add_argument("--target", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--reference-scan", action="store_true", dest="reference_scan", default=None)

    p = add("expand", "undo merges from a sequence")
    p.add_argument("input")
    p.add_argument("sequence")
    p.add_argument("--steps", type=int)

    p = add("hierarchy", "emit merge-tree text and stats")
    p.add_argument("sequence")

    p = add("tokenize", "quantize the tree into a token stream")
    p.add_argument("sequence")
    p.add_argument("--spec-from", choices=("object", "corpus"), dest="spec_from")
    p.add_argument("--corpus", nargs="*", default=[], help="extra sequence files for corpus ranges")

    p = add("masks", "build attention masks for the token order")
    p.add_argument("sequence")
    p.add_argument("--variant", choices=("causal", "levelwise", "tree", "all"))

    p = add("render", "render orbit views to PPM")
    p.add_argument("input")
    p.add_argument("--views", type=int)
    p.add_argument("--size")
    p.add_argument("--workers", type=int)
    p.add_argument("--orbit-from", dest="orbit_from", help="PLY that pins the camera rig")

    p = add("metrics", "PSNR/SSIM per retained level -> CSV + figure")
    p.add_argument("input")
    p.add_argument("--levels")
    p.add_argument("--views", type=int)
    p.add_argument("--size")
    p.add_argument("--workers", type=int)

    p = add("decode", "dequantize a token stream back to a PLY")
    p.add_argument("tokens")
    p.add_argument("--level", type=int)

    p = add("pipeline", "run every stage into one directory")
    p.add_argument("input")
    p.add_argument("--target", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--views", type=int)
    p.add_argument("--size")
    p.add_argument("--levels")
    p.add_argument("--workers", type=int)

    p = add("verify", "run the oracle equivalence suites")
    p.add_argument("--seed", type=int)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args._config = _load_config(args.config)
    try:
        if args.command == "ingest":
            written = stage_ingest(args.input, args.out)
        elif args.command == "simplify":
            written = stage_simplify(
                args.input,
                args.out,
                _resolve(args, "target", int, 1),
                _resolve(args, "beta", float, 0.0),
                _resolve(args, "reference_scan", bool, False),
            )
        elif args.command == "expand":
            written = stage_expand(args.input, args.sequence, args.out, _resolve(args, "steps", int, None))
        elif args.command == "hierarchy":
            written = stage_hierarchy(args.sequence, args.out)
        elif args.command == "tokenize":
            written = stage_tokenize(
                args.sequence, args.out, _resolve(args, "spec_from", str, "corpus"), args.corpus
            )
        elif args.command == "masks":
            written = stage_masks(args.sequence, args.out, _resolve(args, "variant", str, "all"))
        elif args.command == "render":
            written = stage_render(
                args.input,
                args.out,
                _resolve(args, "views", int, 8),
                _resolve(args, "size", str, DEFAULT_SIZE),
                _resolve(args, "workers", int, 1),
                args.orbit_from,
            )
        elif args.command == "metrics":
            written = stage_metrics(
                args.input,
                args.out,
                _resolve(args, "levels", str, DEFAULT_LEVELS),
                _resolve(args, "views", int, 8),
                _resolve(args, "size", str, DEFAULT_SIZE),
                _resolve(args, "workers", int, 1),
            )
        elif args.command == "decode":
            written = stage_decode(args.tokens, args.out, _resolve(args, "level", int, None))
        elif args.command == "pipeline":
            written = stage_pipeline(
                args.input,
                args.out,
                _resolve(args, "target", int, 1),
                _resolve(args, "beta", float, 0.0),
                _resolve(args, "views", int, 8),
                _resolve(args, "size", str, DEFAULT_SIZE),
                _resolve(args, "levels", str, DEFAULT_LEVELS),
                _resolve(args, "workers", int, 1),
            )
        elif args.command == "verify":
            written, failures = stage_verify(args.out, _resolve(args, "seed", int, 0))
            for path in written:
                print(path)
            return 0 if failures == 0 else 1
        else:  # pragma: no cover - argparse enforces choices
            return 2
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return 3
    except (NumericalDegeneracyError, DegenerateMergeError) as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return 4
    except SplatLodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
