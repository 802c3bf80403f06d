"""Command-line entry point.

Every run is fully determined by its flags and input files; all
randomness flows from a single --seed per invocation. Primary outputs
are written atomically (temp file plus rename), so interrupted runs
never leave partial files behind.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from lcgate.decoder import RuleConfig, decode_sequence, speculative_decode
from lcgate.families import FAMILY_ORDER, parse_family
from lcgate.gate import GateFileError, TrainConfig, TrainingError, load_gate, save_gate, train
from lcgate.jsonl import atomic_write_lines, atomic_write_text, read_jsonl
from lcgate.metrics import (
    ResponseRecord,
    code_switch_rate,
    confusion_point_stats,
    confusion_rate,
    partition_by_reference,
)
from lcgate.sampling import SamplingParams, top_norm_fraction
from lcgate.synthetic import SynthConfig, SyntheticModel, build_synthetic
from lcgate.trace import (
    TraceExhausted,
    TraceFormatError,
    load_trace,
    record_trace,
    trace_player,
)
from lcgate.vocab import (
    ClassificationError,
    classify_vocabulary,
    read_classification_jsonl,
    read_vocab_jsonl,
    write_classification_jsonl,
)


class DataError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _load_synth_config(path) -> SynthConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise DataError(f"{path}: {err}") from None
    doc.pop("type", None)
    try:
        if "tokens_per_family" in doc:
            doc["tokens_per_family"] = tuple(doc["tokens_per_family"])
        if "intent_weights" in doc:
            doc["intent_weights"] = tuple(doc["intent_weights"])
        return SynthConfig(**doc)
    except (TypeError, ValueError) as err:
        raise DataError(f"{path}: bad synthetic config: {err}") from None


def _load_model(spec: str):
    """A model path is a synthetic config (.json) or a trace directory."""
    path = Path(spec)
    if path.is_dir():
        if (path / "synth.json").exists():
            return build_synthetic(_load_synth_config(path / "synth.json"))
        return trace_player(path)
    if path.suffix == ".json":
        return build_synthetic(_load_synth_config(path))
    raise DataError(f"{spec}: expected a synthetic config .json or a trace directory")


def _prompt_from_args(args, model) -> list[int]:
    if args.prompt is not None:
        try:
            return [int(x) for x in args.prompt.split(",") if x.strip() != ""]
        except ValueError:
            raise DataError(f"bad --prompt {args.prompt!r}; expected comma-separated ids")
    if args.seq is not None:
        if not isinstance(model, SyntheticModel):
            raise DataError("--seq only addresses synthetic models; use --prompt")
        return model.prompt_for(args.seq)
    if isinstance(model, SyntheticModel):
        return model.prompt_for(0)
    raise DataError("trace playback needs --prompt (the recorded context)")


def _classes_for(model, args):
    if getattr(args, "classes", None):
        return read_classification_jsonl(args.classes)
    if hasattr(model, "classes"):
        return model.classes
    return classify_vocabulary(model.vocabulary)


def _sampling_params(args) -> SamplingParams:
    return SamplingParams(top_k=args.top_k, top_p=args.top_p, temperature=args.temp)


def _rules(args, threshold) -> RuleConfig:
    spec = getattr(args, "rules", "all")
    enabled = {1, 2, 3}
    if spec == "none":
        enabled = set()
    elif spec != "all":
        try:
            enabled = {int(x) for x in spec.split(",")}
        except ValueError:
            raise DataError(f"bad --rules {spec!r}; use all, none, or e.g. 1,3")
        if not enabled <= {1, 2, 3}:
            raise DataError("rule numbers are 1, 2, and 3")
    return RuleConfig(
        threshold=threshold,
        never_mask_protected=1 in enabled,
        safety_backoff=2 in enabled,
        keep_prev_family=3 in enabled,
    )


def _emit(args, payload: str) -> None:
    if getattr(args, "out", None):
        atomic_write_text(args.out, payload if payload.endswith("\n") else payload + "\n")
    else:
        print(payload)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_classify_vocab(args) -> int:
    entries = read_vocab_jsonl(args.vocab)
    classes = classify_vocabulary(entries)
    write_classification_jsonl(args.out, classes)
    if args.summary:
        counts = {f.value: classes.counts[f] for f in FAMILY_ORDER}
        print(json.dumps({"vocab_size": classes.size, "counts": counts}))
    return 0


def cmd_norm_report(args) -> int:
    entries = read_vocab_jsonl(args.vocab)
    missing = [e.id for e in entries if e.norm is None]
    if missing:
        raise DataError(f"{args.vocab}: {len(missing)} records lack a norm value")
    if args.classes:
        classes = read_classification_jsonl(args.classes)
    else:
        classes = classify_vocabulary(entries)
    norms = np.zeros(len(entries))
    for e in entries:
        norms[e.id] = e.norm
    fractions = top_norm_fraction(norms, classes, args.top_frac)
    record = {f.value: round(pct, 2) for f, pct in fractions.items()}
    if args.format == "json":
        _emit(args, json.dumps({"top_frac": args.top_frac, "fraction_percent": record}))
    else:
        lines = [f"family    % of family in top {args.top_frac:.0%} norms"]
        for fam in FAMILY_ORDER:
            if fam in fractions:
                lines.append(f"{fam.value:<9} {fractions[fam]:6.2f}")
        _emit(args, "\n".join(lines))
    return 0


def cmd_synth(args) -> int:
    config = _load_synth_config(args.config) if args.config else SynthConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    model = build_synthetic(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "type": "synthetic",
        "tokens_per_family": list(config.tokens_per_family),
        "d_model": config.d_model,
        "norm_skew": config.norm_skew,
        "intent_margin": config.intent_margin,
        "noise_scale": config.noise_scale,
        "seed": config.seed,
        "intent_weights": list(config.intent_weights),
        "symbol_rate": config.symbol_rate,
        "switch_rate": config.switch_rate,
    }
    atomic_write_text(out / "synth.json", json.dumps(doc, indent=1) + "\n")
    from lcgate.vocab import TokenEntry, write_vocab_jsonl

    write_vocab_jsonl(
        out / "vocab.jsonl",
        [TokenEntry(e.id, e.bytes, norm=float(model.norms[e.id])) for e in model.vocabulary],
    )
    print(f"synthetic model written to {out} (|V|={len(model.vocabulary)})")
    return 0


def cmd_record(args) -> int:
    model = _load_model(args.model)
    if not isinstance(model, SyntheticModel):
        raise DataError("record expects a synthetic model")
    contexts = [model.prompt_for(args.first_seq + i) for i in range(args.seqs)]
    record_trace(
        model,
        contexts,
        steps_per_context=args.steps,
        m=args.M,
        out_dir=args.out,
        params=_sampling_params(args),
        seed=args.seed,
    )
    print(f"recorded {args.seqs} x {args.steps} steps at M={args.M} into {args.out}")
    return 0


def cmd_train_gate(args) -> int:
    trace = load_trace(args.trace)
    if args.classes:
        classes = read_classification_jsonl(args.classes)
    else:
        classes = classify_vocabulary(trace.vocab)
    config = TrainConfig(
        k=args.k,
        p=args.p,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        d_hidden=args.d_hidden,
        validation_fraction=args.val_frac,
        use_adjusted=not args.unadjusted,
    )
    result = train(trace, classes, config)
    result.params.threshold = args.threshold
    save_gate(result.params, args.out, train_config=config)
    for h in result.history:
        val = "" if h.val_loss is None else f" val={h.val_loss:.5f}"
        print(f"epoch {h.epoch:3d} train={h.train_loss:.5f}{val}")
    print(
        f"gate saved to {args.out} "
        f"(train={result.n_train}, val={result.n_val}, truncated={result.n_truncated})"
    )
    return 0


def _outcome_record(out) -> dict:
    return {
        "token_id": out.token_id,
        "intervened": out.intervened,
        "masked_families": sorted(f.value for f in out.masked_families),
        "gate_allowed": None
        if out.gate_allowed is None
        else sorted(f.value for f in out.gate_allowed),
        "candidates_before": out.candidate_ids_before,
        "candidates_after": out.candidate_ids_after,
        "confusion_point": out.confusion_point,
        "confusion_token_rank": out.confusion_token_rank,
        "consistent_in_top3": out.consistent_in_top3,
        "fallback": out.fallback,
    }


def cmd_decode(args) -> int:
    model = _load_model(args.model)
    classes = _classes_for(model, args)
    gate = load_gate(args.gate) if args.gate else None
    threshold = args.threshold if args.threshold is not None else (
        gate.threshold if gate else 0.5
    )
    rules = _rules(args, threshold)
    prompt = _prompt_from_args(args, model)
    rng = None if args.greedy else np.random.default_rng(args.seed)
    tokens, outcomes = decode_sequence(
        model, gate, prompt, _sampling_params(args), rules, rng, args.max_steps,
        classes=classes,
    )
    lines = [json.dumps(_outcome_record(o)) for o in outcomes]
    interventions = sum(o.intervened for o in outcomes)
    summary = {
        "steps": len(outcomes),
        "interventions": interventions,
        "intervention_rate": interventions / len(outcomes),
        "confusion_points": sum(o.confusion_point for o in outcomes),
    }
    lines.append(json.dumps({"summary": summary}))
    if args.out:
        atomic_write_lines(args.out, lines)
    else:
        for line in lines:
            print(line)
    raw = b"".join(bytes(model.vocabulary[t].bytes) for t in tokens)
    print(raw.decode("utf-8", errors="replace"))
    return 0


def _read_responses(path) -> list[ResponseRecord]:
    records = []
    try:
        for lineno, rec in read_jsonl(path):
            try:
                records.append(
                    ResponseRecord(
                        id=str(rec["id"]),
                        text=rec["text"],
                        reference=rec.get("reference"),
                        target_language=rec.get("target_language"),
                    )
                )
            except KeyError as err:
                raise DataError(f"{path}: line {lineno}: missing field {err}") from None
    except json.JSONDecodeError as err:
        raise DataError(f"{path}: {err}") from None
    if not records:
        raise DataError(f"{path}: no responses")
    return records


def cmd_eval(args) -> int:
    responses = _read_responses(args.responses)
    family = parse_family(args.family)
    report: dict = {"n": len(responses)}
    if args.partition:
        no_latin, with_latin = partition_by_reference(responses)
        report["no_latin_n"] = len(no_latin)
        report["with_latin_n"] = len(with_latin)
        if no_latin:
            report["confusion_percent"] = confusion_rate(no_latin, family)
        if with_latin:
            report["code_switch_percent"] = code_switch_rate(with_latin)
    else:
        report["confusion_percent"] = confusion_rate(responses, family)
        report["code_switch_percent"] = code_switch_rate(responses)
    if args.format == "json":
        _emit(args, json.dumps(report))
    else:
        _emit(args, "\n".join(f"{k}: {v}" for k, v in report.items()))
    return 0


def cmd_stats(args) -> int:
    points = top1 = top3 = 0
    try:
        for lineno, rec in read_jsonl(args.outcomes):
            if "summary" in rec:
                continue
            if rec.get("confusion_point"):
                points += 1
                top1 += rec.get("confusion_token_rank") == 1
                top3 += bool(rec.get("consistent_in_top3"))
    except (OSError, json.JSONDecodeError) as err:
        raise DataError(f"{args.outcomes}: {err}") from None
    report = {
        "points": points,
        "top1_confusion_frac": top1 / points if points else None,
        "top3_consistent_frac": top3 / points if points else None,
    }
    if args.format == "json":
        _emit(args, json.dumps(report))
    else:
        _emit(args, "\n".join(f"{k}: {v}" for k, v in report.items()))
    return 0


def cmd_specdec(args) -> int:
    draft = _load_model(args.draft)
    target = _load_model(args.target)
    classes = _classes_for(target, args)
    gate = load_gate(args.gate) if args.gate else None
    threshold = args.threshold if args.threshold is not None else (
        gate.threshold if gate else 0.5
    )
    rules = _rules(args, threshold)
    prompt = _prompt_from_args(args, target)
    result = speculative_decode(
        draft, target, gate, rules, _sampling_params(args),
        draft_len=args.gamma, prompt=prompt, max_steps=args.max_steps,
        classes=classes,
    )
    report = {
        "tokens": result.tokens,
        "proposed": result.proposed,
        "accepted": result.accepted,
        "accept_rate": result.accept_rate,
    }
    _emit(args, json.dumps(report))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(
        prog="lcg",
        description=(
            "Language confusion gating toolkit: classify a vocabulary into "
            "families, train a gate on norm-adjusted self-distillation "
            "targets, and decode with rule-guarded family masking."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def sampling_flags(p):
        p.add_argument("--top-k", type=int, default=20, help="top-k cutoff (default 20)")
        p.add_argument("--top-p", type=float, default=0.95, help="nucleus mass (default 0.95)")
        p.add_argument("--temp", type=float, default=1.0, help="temperature (default 1.0)")

    p = sub.add_parser("classify-vocab", help="classify a vocab JSONL into families")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--summary", action="store_true", help="print counts to stdout")
    p.set_defaults(func=cmd_classify_vocab)

    p = sub.add_parser("norm-report", help="per-family share of the top-norm slice")
    p.add_argument("--vocab", required=True, help="vocab JSONL with norm values")
    p.add_argument("--classes", help="classification JSONL (default: classify now)")
    p.add_argument("--top-frac", type=float, default=0.05, help="norm slice (default 0.05)")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_norm_report)

    p = sub.add_parser("synth", help="materialize a synthetic model directory")
    p.add_argument("--config", help="SynthConfig JSON (default: built-in defaults)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("record", help="record a trace from a synthetic model")
    p.add_argument("--model", required=True)
    p.add_argument("--seqs", type=int, default=400)
    p.add_argument("--first-seq", type=int, default=0)
    p.add_argument("--steps", type=int, default=48)
    p.add_argument("--M", type=int, default=256, help="sparse top size (default 256)")
    p.add_argument("--seed", type=int, default=0)
    sampling_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("train-gate", help="train the gate on a recorded trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--classes", help="classification JSONL (default: classify trace vocab)")
    p.add_argument("--k", type=int, default=20, help="pseudo-target top-k (default 20)")
    p.add_argument("--p", type=float, default=0.95, help="pseudo-target top-p (default 0.95)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--adjusted", action="store_true", default=True,
                       help="norm-adjusted targets (default)")
    group.add_argument("--unadjusted", action="store_true",
                       help="raw-distribution targets (ablation)")
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--d-hidden", type=int, default=256)
    p.add_argument("--val-frac", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.5,
                   help="decision threshold stored in the gate file (default 0.5)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_gate)

    p = sub.add_parser("decode", help="decode with optional gate masking")
    p.add_argument("--model", required=True)
    p.add_argument("--gate")
    p.add_argument("--seq", type=int, help="synthetic sequence id for the prompt")
    p.add_argument("--prompt", help="comma-separated token ids")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--greedy", action="store_true", help="argmax instead of sampling")
    p.add_argument("--max-steps", type=int, default=64)
    p.add_argument("--rules", default="all", help="all, none, or a list like 1,3")
    p.add_argument("--threshold", type=float,
                   help="gate threshold (default: value stored in the gate file, 0.5)")
    sampling_flags(p)
    p.add_argument("--out", help="step outcomes JSONL (default: stdout); decoded "
                                 "text always goes to stdout")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="confusion / code-switch metrics over responses")
    p.add_argument("--responses", required=True)
    p.add_argument("--family", required=True, choices=("cj", "latin"))
    p.add_argument("--partition", action="store_true",
                   help="split by reference Latin letters first")
    p.add_argument("--format", choices=("text", "json"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", help="confusion-point statistics over decode outcomes")
    p.add_argument("--outcomes", required=True)
    p.add_argument("--format", choices=("text", "json"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("specdec", help="greedy speculative decoding with gate masking")
    p.add_argument("--draft", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--gate")
    p.add_argument("--gamma", type=int, default=4, help="draft block length (default 4)")
    p.add_argument("--seq", type=int)
    p.add_argument("--prompt")
    p.add_argument("--seed", type=int, default=0,
                   help="accepted for interface parity; greedy mode is deterministic")
    p.add_argument("--max-steps", type=int, default=64)
    p.add_argument("--rules", default="all")
    p.add_argument("--threshold", type=float)
    sampling_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_specdec)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        DataError,
        ClassificationError,
        TraceFormatError,
        TraceExhausted,
        GateFileError,
        TrainingError,
        FileNotFoundError,
        ValueError,
    ) as err:
        print(f"lcg: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
