#!/usr/bin/env python3
"""Run the full synthetic pipeline and print a benchmark report.

Covers the confusion-reduction run (ungated vs gated with adjusted and
raw training targets) and the planted-switch allowance run.
"""

import argparse
import json
import time
from dataclasses import replace

from lcgate.benchmark import BENCHMARK_SYNTH, run_benchmark, run_switch_benchmark


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--eval-seqs", type=int, default=500)
    parser.add_argument("--eval-steps", type=int, default=64)
    parser.add_argument("--noise", type=float, default=BENCHMARK_SYNTH.noise_scale)
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    args = parser.parse_args()

    start = time.perf_counter()
    rep = run_benchmark(
        synth=replace(BENCHMARK_SYNTH, noise_scale=args.noise),
        eval_sequences=args.eval_seqs,
        eval_steps=args.eval_steps,
    )
    switch = run_switch_benchmark()
    elapsed = time.perf_counter() - start

    best = min(
        (h for h in rep.adjusted_train.history if h.val_loss is not None),
        key=lambda h: h.val_loss,
    )
    doc = {
        "ungated_confusion_percent": rep.ungated.confusion_percent,
        "gated_adjusted_confusion_percent": rep.gated_adjusted.confusion_percent,
        "gated_unadjusted_confusion_percent": rep.gated_unadjusted.confusion_percent,
        "intervention_rate": rep.gated_adjusted.intervention_rate,
        "target_intent_agreement_adjusted": rep.target_agreement_adjusted,
        "target_intent_agreement_raw": rep.target_agreement_raw,
        "held_out_precision": {f.value: best.precision[f] for f in best.precision},
        "held_out_recall": {f.value: best.recall[f] for f in best.recall},
        "switch_allowance_percent": switch.allowance_percent,
        "switch_positions_checked": switch.positions_checked,
        "wall_seconds": round(elapsed, 1),
    }
    if args.json:
        print(json.dumps(doc, indent=1))
        return
    print(f"ungated confusion:        {doc['ungated_confusion_percent']}%")
    print(f"gated (adjusted targets): {doc['gated_adjusted_confusion_percent']}%")
    print(f"gated (raw targets):      {doc['gated_unadjusted_confusion_percent']}%")
    print(f"intervention rate:        {doc['intervention_rate']:.3%}")
    print(
        "target-intent agreement:  "
        f"adjusted {doc['target_intent_agreement_adjusted']:.4f} vs "
        f"raw {doc['target_intent_agreement_raw']:.4f}"
    )
    print(f"switch allowance:         {doc['switch_allowance_percent']}% "
          f"({doc['switch_positions_checked']} positions)")
    print(f"wall time:                {elapsed:.1f}s")


if __name__ == "__main__":
    main()
