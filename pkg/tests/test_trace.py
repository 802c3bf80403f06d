"""Trace recording, on-disk round-trips, and playback."""

import json

import numpy as np
import pytest

from lcgate.gate import TrainingExample, pseudo_target
from lcgate.sampling import SamplingParams
from lcgate.synthetic import SynthConfig, build_synthetic
from lcgate.trace import (
    TraceExhausted,
    TraceFormatError,
    TracePlayer,
    load_trace,
    record_trace,
    save_trace,
    sparse_logits,
    trace_player,
)

SMALL = SynthConfig(tokens_per_family=(24, 24, 12, 24), d_model=16, seed=7)


@pytest.fixture(scope="module")
def model():
    return build_synthetic(SMALL)


class TestRecord:
    def test_full_m_masses_sum_to_one(self, model):
        trace = record_trace(
            model, [model.prompt_for(0)], steps_per_context=8, m=84, out_dir=None
        )
        for step in trace.steps:
            assert abs(step.raw_probs.sum() - 1.0) < 1e-6
            assert abs(step.adjusted_probs.sum() - 1.0) < 1e-6

    def test_truncated_m_retains_heavy_mass(self):
        from lcgate.synthetic import SynthConfig, build_synthetic

        full_scale = build_synthetic(SynthConfig(seed=7))  # 320 tokens
        trace = record_trace(
            full_scale, [full_scale.prompt_for(i) for i in range(8)],
            steps_per_context=16, m=256, out_dir=None,
        )
        covered = sum(float(s.adjusted_probs.sum()) >= 0.999 for s in trace.steps)
        assert covered / len(trace.steps) >= 0.99

    def test_chain_of_prev_and_chosen(self, model):
        prompt = model.prompt_for(4)
        trace = record_trace(model, [prompt], steps_per_context=6, m=20, out_dir=None)
        assert trace.steps[0].prev_id == prompt[-1]
        for a, b in zip(trace.steps, trace.steps[1:]):
            assert b.prev_id == a.chosen_id

    def test_same_seed_identical_trace(self, model, tmp_path):
        kwargs = dict(steps_per_context=5, m=30, seed=3)
        t1 = record_trace(model, [model.prompt_for(1)], out_dir=tmp_path / "a", **kwargs)
        t2 = record_trace(model, [model.prompt_for(1)], out_dir=tmp_path / "b", **kwargs)
        assert (tmp_path / "a" / "steps.jsonl").read_text() == (
            tmp_path / "b" / "steps.jsonl"
        ).read_text()
        assert [s.chosen_id for s in t1.steps] == [s.chosen_id for s in t2.steps]


class TestRoundTrip:
    def test_values_bit_exact_at_float32(self, model, tmp_path):
        out = tmp_path / "trace"
        recorded = record_trace(
            model, [model.prompt_for(i) for i in range(3)], steps_per_context=7,
            m=25, out_dir=out,
        )
        loaded = load_trace(out)
        assert loaded.meta.vocab_size == len(model.vocabulary)
        assert loaded.meta.d_in == model.d_in
        assert len(loaded.steps) == len(recorded.steps)
        for a, b in zip(recorded.steps, loaded.steps):
            assert (np.float32(a.h) == np.float32(b.h)).all()
            assert a.raw_ids.tolist() == b.raw_ids.tolist()
            assert (np.float32(a.raw_probs) == np.float32(b.raw_probs)).all()
            assert (np.float32(a.adjusted_probs) == np.float32(b.adjusted_probs)).all()
            assert a.chosen_id == b.chosen_id and a.prev_id == b.prev_id

    def test_save_load_save_is_identity(self, model, tmp_path):
        out1, out2 = tmp_path / "t1", tmp_path / "t2"
        record_trace(model, [model.prompt_for(0)], steps_per_context=4, m=20, out_dir=out1)
        save_trace(load_trace(out1), out2)
        for name in ("steps.jsonl", "vocab.jsonl"):
            assert (out1 / name).read_text() == (out2 / name).read_text()

    def test_pseudo_targets_stable_under_truncation(self, model):
        # Same targets from the truncated list as from the full vocabulary
        # whenever the retained mass covers the nucleus.
        full = record_trace(
            model, [model.prompt_for(2)], steps_per_context=10, m=84, out_dir=None
        )
        cut = record_trace(
            model, [model.prompt_for(2)], steps_per_context=10, m=40, out_dir=None
        )
        for a, b in zip(full.steps, cut.steps):
            if float(b.adjusted_probs.sum()) < 0.95:
                continue
            ya = pseudo_target(
                TrainingExample(a.h, a.adjusted_ids, a.adjusted_probs), model.classes, 20, 0.95
            )
            yb = pseudo_target(
                TrainingExample(b.h, b.adjusted_ids, b.adjusted_probs), model.classes, 20, 0.95
            )
            assert (ya == yb).all()


class TestValidation:
    def make_trace_dir(self, model, tmp_path):
        out = tmp_path / "trace"
        record_trace(model, [model.prompt_for(0)], steps_per_context=3, m=15, out_dir=out)
        return out

    def test_empty_steps_rejected(self, model, tmp_path):
        out = self.make_trace_dir(model, tmp_path)
        (out / "steps.jsonl").write_text("")
        with pytest.raises(TraceFormatError, match="no recorded steps"):
            load_trace(out)

    def test_missing_field_reports_line(self, model, tmp_path):
        out = self.make_trace_dir(model, tmp_path)
        lines = (out / "steps.jsonl").read_text().splitlines()
        rec = json.loads(lines[1])
        del rec["h"]
        lines[1] = json.dumps(rec)
        (out / "steps.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(TraceFormatError, match="line 2.*'h'"):
            load_trace(out)

    def test_out_of_range_id_rejected(self, model, tmp_path):
        out = self.make_trace_dir(model, tmp_path)
        lines = (out / "steps.jsonl").read_text().splitlines()
        rec = json.loads(lines[0])
        rec["raw_top"][0][0] = 10_000
        lines[0] = json.dumps(rec)
        (out / "steps.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(TraceFormatError, match="out of range"):
            load_trace(out)

    def test_vocab_size_disagreement(self, model, tmp_path):
        out = self.make_trace_dir(model, tmp_path)
        meta = json.loads((out / "meta.json").read_text())
        meta["vocab_size"] += 1
        (out / "meta.json").write_text(json.dumps(meta))
        with pytest.raises(TraceFormatError, match="declares"):
            load_trace(out)


class TestPlayer:
    def test_replays_stored_steps_in_order(self, model, tmp_path):
        out = tmp_path / "trace"
        recorded = record_trace(
            model, [model.prompt_for(5)], steps_per_context=6, m=84, out_dir=out
        )
        player = trace_player(out)
        for step in recorded.steps:
            h, logits = player.step([0])
            assert (np.float32(h) == np.float32(step.h)).all()
            top = int(np.argmax(logits))
            assert top == step.raw_ids[0]

    def test_exhaustion_is_an_error(self, model):
        trace = record_trace(model, [model.prompt_for(0)], steps_per_context=2, m=10, out_dir=None)
        player = TracePlayer(trace)
        player.step([0])
        player.step([0])
        with pytest.raises(TraceExhausted):
            player.step([0])

    def test_sparse_logits_preserve_relative_mass(self):
        ids = np.array([3, 1])
        probs = np.array([0.6, 0.3])
        logits = sparse_logits(ids, probs, 5)
        assert np.isneginf(logits[[0, 2, 4]]).all()
        assert np.exp(logits[3]) / np.exp(logits[1]) == pytest.approx(2.0)

    def test_gate_dimension_mismatch_caught_at_use(self, model):
        from lcgate.gate import gate_forward, init_gate

        trace = record_trace(model, [model.prompt_for(0)], steps_per_context=1, m=10, out_dir=None)
        player = TracePlayer(trace)
        gate = init_gate(model.d_in + 2, 8, np.random.default_rng(0))
        h, _ = player.step([0])
        with pytest.raises(ValueError, match="expects"):
            gate_forward(gate, h)

    def test_gated_replay_reproduces_live_decisions(self, model):
        # Capture a live gated decode step by step, rebuild it as a
        # lossless (M=|V|) trace, and replay the same gated decode over
        # the player: every sampled token and gating decision must match.
        from lcgate.decoder import RuleConfig, decode_sequence
        from lcgate.gate import TrainConfig, train
        from lcgate.sampling import SamplingParams, norm_adjust, softmax_with_temperature
        from lcgate.trace import Trace, TraceMeta, TraceStep, top_sparse

        train_trace = record_trace(
            model, [model.prompt_for(100 + i) for i in range(40)],
            steps_per_context=24, m=84, out_dir=None, seed=4,
        )
        gate = train(
            train_trace, model.classes, TrainConfig(epochs=6, d_hidden=32, seed=2)
        ).params

        class CapturingModel:
            def __init__(self, inner):
                self.inner = inner
                self.vocabulary = inner.vocabulary
                self.norms = inner.norms
                self.d_in = inner.d_in
                self.classes = inner.classes
                self.captured = []

            def step(self, context):
                h, logits = self.inner.step(context)
                self.captured.append((h, logits, int(context[-1])))
                return h, logits

        params = SamplingParams(20, 0.95, 1.0)
        rules = RuleConfig()
        prompt = model.prompt_for(7)
        capture = CapturingModel(model)
        live_tokens, live_outcomes = decode_sequence(
            capture, gate, prompt, params, rules, np.random.default_rng(11), 64
        )

        steps = []
        for (h, logits, prev_id), chosen in zip(capture.captured, live_tokens):
            raw = softmax_with_temperature(logits, 1.0)
            adjusted = softmax_with_temperature(norm_adjust(logits, model.norms), 1.0)
            raw_ids, raw_probs = top_sparse(raw, len(raw))
            adj_ids, adj_probs = top_sparse(adjusted, len(adjusted))
            steps.append(
                TraceStep(
                    h=np.float32(h),
                    raw_ids=raw_ids,
                    raw_probs=np.float32(raw_probs),
                    adjusted_ids=adj_ids,
                    adjusted_probs=np.float32(adj_probs),
                    chosen_id=chosen,
                    prev_id=prev_id,
                )
            )
        trace = Trace(
            meta=TraceMeta(
                d_in=model.d_in, M=len(model.vocabulary),
                vocab_size=len(model.vocabulary), source="capture", family_counts={},
            ),
            vocab=model.vocabulary,
            norms=model.norms,
            steps=steps,
        )

        player = TracePlayer(trace)
        replay_tokens, replay_outcomes = decode_sequence(
            player, gate, prompt, params, rules, np.random.default_rng(11), 64,
            classes=model.classes,
        )
        assert replay_tokens == live_tokens
        for a, b in zip(live_outcomes, replay_outcomes):
            assert a.intervened == b.intervened
            assert a.masked_families == b.masked_families
            assert a.gate_allowed == b.gate_allowed
            assert a.confusion_point == b.confusion_point
