#!/usr/bin/env python3
"""Sweep the synthetic model's noise scale and report benchmark rates.

Used to pick the frozen benchmark config: the noise scale must push the
ungated sampled confusion rate above the 3% floor while keeping the
step-level intervention rate under 2% and the gate's held-out precision
and recall above 0.95.

Example:
    python3 scripts/calibrate_synth.py --noise 0.55 0.60 0.65 --eval-seqs 250
"""

import argparse
from dataclasses import replace

from lcgate.benchmark import BENCHMARK_SYNTH, run_benchmark


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--noise", type=float, nargs="+", default=[0.55, 0.58, 0.60, 0.62])
    parser.add_argument("--train-seqs", type=int, default=400)
    parser.add_argument("--train-steps", type=int, default=48)
    parser.add_argument("--eval-seqs", type=int, default=500)
    parser.add_argument("--eval-steps", type=int, default=64)
    args = parser.parse_args()

    header = (
        f"{'noise':>6} {'ungated%':>9} {'adj%':>6} {'raw%':>6} "
        f"{'interv%':>8} {'agree_adj':>9} {'agree_raw':>9} {'minP':>6} {'minR':>6}"
    )
    print(header)
    print("-" * len(header))
    for noise in args.noise:
        rep = run_benchmark(
            synth=replace(BENCHMARK_SYNTH, noise_scale=noise),
            train_sequences=args.train_seqs,
            train_steps=args.train_steps,
            eval_sequences=args.eval_seqs,
            eval_steps=args.eval_steps,
        )
        best = min(
            (h for h in rep.adjusted_train.history if h.val_loss is not None),
            key=lambda h: h.val_loss,
        )
        min_p = min(v for v in best.precision.values() if v is not None)
        min_r = min(v for v in best.recall.values() if v is not None)
        print(
            f"{noise:>6.2f} {rep.ungated.confusion_percent:>9.2f} "
            f"{rep.gated_adjusted.confusion_percent:>6.2f} "
            f"{rep.gated_unadjusted.confusion_percent:>6.2f} "
            f"{100 * rep.gated_adjusted.intervention_rate:>8.3f} "
            f"{rep.target_agreement_adjusted:>9.4f} {rep.target_agreement_raw:>9.4f} "
            f"{min_p:>6.3f} {min_r:>6.3f}"
        )


if __name__ == "__main__":
    main()
