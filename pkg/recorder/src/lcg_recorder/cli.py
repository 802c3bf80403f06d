"""Command-line exporter: vocab dumps and step traces from a causal LM."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


def _load(model_path: str, revision: str | None, device: str):
    import torch
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_path, revision=revision)
    model = AutoModelForCausalLM.from_pretrained(
        model_path, revision=revision, torch_dtype=torch.float32
    )
    return model.to(device).eval(), tokenizer


def _read_prompts(path: str) -> list[str]:
    prompts = [
        line.rstrip("\n") for line in Path(path).read_text(encoding="utf-8").splitlines()
    ]
    prompts = [p for p in prompts if p.strip()]
    if not prompts:
        raise ValueError(f"{path}: no prompts")
    return prompts


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lcg-record",
        description="Export trace directories from a HuggingFace causal LM.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-vocab", help="write vocab.jsonl with bytes and norms")
    p.add_argument("--model", required=True, help="model path or hub id")
    p.add_argument("--revision")
    p.add_argument("--device", default="cpu")
    p.add_argument("--out", required=True)

    p = sub.add_parser("record", help="roll out prompts and write a trace directory")
    p.add_argument("--model", required=True)
    p.add_argument("--revision")
    p.add_argument("--prompts", required=True, help="text file, one prompt per line")
    p.add_argument("--max-new-tokens", type=int, default=32)
    p.add_argument("--M", type=int, default=256)
    p.add_argument("--sample", action="store_true", help="sample instead of greedy")
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--top-p", type=float, default=0.95)
    p.add_argument("--temp", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device", default="cpu")
    p.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "export-vocab":
            from lcg_recorder.export import export_vocab

            model, tokenizer = _load(args.model, args.revision, args.device)
            n = export_vocab(model, tokenizer, args.out)
            print(f"wrote {n} records to {args.out}")
            return 0

        from lcg_recorder.export import RecorderConfig, record_steps

        model, tokenizer = _load(args.model, args.revision, args.device)
        config = RecorderConfig(
            model_path=args.model,
            out_dir=args.out,
            prompts=_read_prompts(args.prompts),
            max_new_tokens=args.max_new_tokens,
            m=args.M,
            top_k=args.top_k,
            top_p=args.top_p,
            temperature=args.temp,
            greedy=not args.sample,
            seed=args.seed,
            device=args.device,
            revision=args.revision,
        )
        meta = record_steps(model, tokenizer, config)
        print(
            f"recorded {meta['extra']['prompts']} prompts x "
            f"{meta['extra']['max_new_tokens']} steps into {args.out}"
        )
        return 0
    except (ValueError, RuntimeError, OSError) as err:
        print(f"lcg-record: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
