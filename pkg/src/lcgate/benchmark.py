"""End-to-end synthetic benchmark: record, train, decode, measure.

One benchmark run builds a norm-skewed synthetic model, records an
ungated trace on training sequences, trains gates on adjusted and raw
pseudo-targets, decodes a disjoint evaluation corpus with and without
gating, and reports confusion rates, intervention rates, and gate
quality. A second corpus with planted legitimate Latin switches feeds
the token-level allowance measurement.

Confusion here follows the text-level metric: a response counts as
confused when it contains a character from CJ or Latin without that
family being the sequence intent. Low-resource intrusions are not
counted, mirroring how the CJ%/Latin% metrics are defined.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from lcgate.decoder import RuleConfig, decode_sequence
from lcgate.families import LanguageFamily
from lcgate.gate import (
    GateParams,
    TrainConfig,
    TrainResult,
    TruncatedExample,
    build_examples,
    pseudo_target,
    train,
)
from lcgate.metrics import ResponseRecord, allowance_check, round2
from lcgate.sampling import SamplingParams
from lcgate.synthetic import SynthConfig, SyntheticModel, build_synthetic
from lcgate.trace import Trace, record_trace

CJ = LanguageFamily.CJ
LATIN = LanguageFamily.LATIN
SYMBOLS = LanguageFamily.SYMBOLS

# Calibrated defaults: with this model, ungated sampling confuses a few
# percent of responses while CJ candidates stay rare enough at step
# level to keep interventions sparse.
BENCHMARK_SYNTH = SynthConfig(
    tokens_per_family=(96, 96, 32, 96),
    d_model=32,
    norm_skew=1.5,
    intent_margin=11.0,
    noise_scale=0.60,
    seed=20,
)

BENCHMARK_PARAMS = SamplingParams(top_k=20, top_p=0.95, temperature=1.0)

TRAIN_SEQUENCES = 400
TRAIN_STEPS = 48
EVAL_SEQUENCES = 500
EVAL_STEPS = 64
TRAIN_SEQ_OFFSET = 4000  # training ids disjoint from evaluation ids


@dataclass
class CorpusResult:
    responses: list[ResponseRecord]
    confusion_percent: float  # responses with an out-of-intent CJ/Latin char
    intervention_rate: float  # fraction of steps that masked something
    steps: int
    interventions: int
    confusion_points: int


@dataclass
class BenchmarkReport:
    ungated: CorpusResult
    gated_adjusted: CorpusResult
    gated_unadjusted: CorpusResult
    adjusted_train: TrainResult
    unadjusted_train: TrainResult
    target_agreement_adjusted: float
    target_agreement_raw: float
    wall_seconds: float = 0.0


def decode_text(model: SyntheticModel, tokens) -> str:
    raw = b"".join(model.vocabulary[t].bytes for t in tokens)
    return raw.decode("utf-8", errors="replace")


def response_confused(model: SyntheticModel, sid: int, text: str) -> bool:
    from lcgate.metrics import contains_family_chars

    intent = model.intent_of(sid)
    for fam in (CJ, LATIN):
        if fam is not intent and contains_family_chars(text, fam):
            return True
    return False


def run_corpus(
    model: SyntheticModel,
    gate: GateParams | None,
    sequence_ids,
    steps: int,
    params: SamplingParams,
    rules: RuleConfig,
    seed: int,
) -> CorpusResult:
    responses = []
    interventions = 0
    total_steps = 0
    confusion_points = 0
    flagged = 0
    rng = np.random.default_rng(seed)
    for sid in sequence_ids:
        prompt = model.prompt_for(sid)
        tokens, outcomes = decode_sequence(
            model, gate, prompt, params, rules, rng, steps
        )
        text = decode_text(model, tokens)
        responses.append(
            ResponseRecord(id=str(sid), text=text, target_language=model.intent_of(sid).value)
        )
        interventions += sum(o.intervened for o in outcomes)
        confusion_points += sum(o.confusion_point for o in outcomes)
        total_steps += len(outcomes)
        flagged += response_confused(model, sid, text)
    return CorpusResult(
        responses=responses,
        confusion_percent=round2(100.0 * flagged / len(responses)),
        intervention_rate=interventions / total_steps,
        steps=total_steps,
        interventions=interventions,
        confusion_points=confusion_points,
    )


def target_intent_agreement(
    model: SyntheticModel, trace: Trace, sequence_ids, steps: int, use_adjusted: bool,
    k: int = 20, p: float = 0.95,
) -> float:
    """Fraction of non-symbol steps whose pseudo-target cleanly names the
    intended family: the true family is present and no other maskable-or-
    low-resource family leaks in (symbols are always neutral)."""
    examples = build_examples(trace, use_adjusted)
    idx = 0
    matches = 0
    total = 0
    sym_idx = 2
    fam_index = {CJ: 0, LATIN: 1, SYMBOLS: 2, LanguageFamily.LOWRES: 3}
    for sid in sequence_ids:
        switch_steps = set(model.switch_positions(sid, steps))
        intent = model.intent_of(sid)
        for step in range(steps):
            ex = examples[idx]
            idx += 1
            ctx_stub = model.prompt_for(sid) + [0] * step
            kind = model._step_kind(ctx_stub)
            if kind == "symbol":
                continue
            truth = LATIN if step in switch_steps else intent
            try:
                y = pseudo_target(ex, model.classes, k, p)
            except TruncatedExample:
                continue
            total += 1
            ti = fam_index[truth]
            clean = y[ti] == 1.0 and all(
                y[i] == 0.0 for i in range(4) if i not in (ti, sym_idx)
            )
            matches += clean
    return matches / total if total else 0.0


def run_benchmark(
    synth: SynthConfig = BENCHMARK_SYNTH,
    params: SamplingParams = BENCHMARK_PARAMS,
    rules: RuleConfig = RuleConfig(),
    train_config: TrainConfig = TrainConfig(),
    train_sequences: int = TRAIN_SEQUENCES,
    train_steps: int = TRAIN_STEPS,
    eval_sequences: int = EVAL_SEQUENCES,
    eval_steps: int = EVAL_STEPS,
) -> BenchmarkReport:
    model = build_synthetic(synth)
    train_ids = [TRAIN_SEQ_OFFSET + i for i in range(train_sequences)]
    eval_ids = list(range(eval_sequences))

    contexts = [model.prompt_for(sid) for sid in train_ids]
    trace = record_trace(
        model, contexts, steps_per_context=train_steps, m=256, out_dir=None,
        params=params, seed=synth.seed + 1,
    )

    adjusted = train(trace, model.classes, train_config)
    unadjusted = train(trace, model.classes, replace(train_config, use_adjusted=False))

    ungated = run_corpus(model, None, eval_ids, eval_steps, params, rules, seed=7)
    gated_adj = run_corpus(
        model, adjusted.params, eval_ids, eval_steps, params, rules, seed=7
    )
    gated_raw = run_corpus(
        model, unadjusted.params, eval_ids, eval_steps, params, rules, seed=7
    )

    agree_adj = target_intent_agreement(model, trace, train_ids, train_steps, True)
    agree_raw = target_intent_agreement(model, trace, train_ids, train_steps, False)

    return BenchmarkReport(
        ungated=ungated,
        gated_adjusted=gated_adj,
        gated_unadjusted=gated_raw,
        adjusted_train=adjusted,
        unadjusted_train=unadjusted,
        target_agreement_adjusted=agree_adj,
        target_agreement_raw=agree_raw,
    )


@dataclass
class SwitchReport:
    allowance_percent: float
    positions_checked: int


def run_switch_benchmark(
    synth: SynthConfig | None = None,
    params: SamplingParams = BENCHMARK_PARAMS,
    rules: RuleConfig = RuleConfig(),
    train_config: TrainConfig = TrainConfig(),
    sequences: int = 300,
    steps: int = 32,
) -> SwitchReport:
    """Token-level allowance on a corpus with planted legitimate switches.

    Positions checked are planted-switch steps where the ungated rollout
    actually chose a Latin token, the synthetic stand-in for
    human-validated natural code-switch points.
    """
    if synth is None:
        synth = replace(BENCHMARK_SYNTH, switch_rate=0.10)
    model = build_synthetic(synth)
    train_ids = [TRAIN_SEQ_OFFSET + i for i in range(TRAIN_SEQUENCES)]
    eval_ids = list(range(sequences))

    train_trace = record_trace(
        model, [model.prompt_for(sid) for sid in train_ids],
        steps_per_context=TRAIN_STEPS, m=256, out_dir=None, params=params,
        seed=synth.seed + 1,
    )
    gate = train(train_trace, model.classes, train_config).params

    eval_trace = record_trace(
        model, [model.prompt_for(sid) for sid in eval_ids],
        steps_per_context=steps, m=256, out_dir=None, params=params,
        seed=synth.seed + 2,
    )
    positions = []
    for i, sid in enumerate(eval_ids):
        base = i * steps
        for off in model.switch_positions(sid, steps):
            pos = base + off
            chosen = eval_trace.steps[pos].chosen_id
            if model.classes.families[chosen] is LATIN and model.intent_of(sid) is not LATIN:
                positions.append(pos)
    pct = allowance_check(
        gate, rules, eval_trace, positions, params=params, classes=model.classes
    )
    return SwitchReport(allowance_percent=pct, positions_checked=len(positions))
