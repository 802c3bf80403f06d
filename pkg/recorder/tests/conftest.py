"""A tiny local byte-level-BPE causal LM for offline recorder tests."""

import pytest
import torch
from tokenizers import Tokenizer, decoders, models, pre_tokenizers, trainers
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

CORPUS = [
    "hello world this is a small test corpus",
    "the quick brown fox jumps over the lazy dog",
    "שלום עולם זהו קורפוס קטן",
    "你好世界 这是一个测试",
    "привет мир это корпус",
    "def main(): return 42",
    "numbers 0 1 2 3 4 5 6 7 8 9 and symbols !?.,;:",
] * 3


def build_tiny_lm(tmp_path):
    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=300,
        special_tokens=["<|end|>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
    )
    tok.train_from_iterator(CORPUS, trainer)
    tokenizer = PreTrainedTokenizerFast(tokenizer_object=tok, eos_token="<|end|>")
    vocab_size = len(tokenizer.get_vocab())

    config = GPT2Config(
        vocab_size=vocab_size,
        n_positions=128,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=0,
        eos_token_id=0,
        tie_word_embeddings=False,
    )
    torch.manual_seed(7)
    model = GPT2LMHeadModel(config).eval()
    with torch.no_grad():
        # Random init yields a near-uniform next-token distribution; real
        # trained models concentrate their mass and carry large final-norm
        # gains. Scale the final layernorm (grows the hidden-state norm,
        # sharpening both raw and norm-adjusted distributions) and the
        # untied head (sets the raw logit scale) to realistic entropy.
        model.transformer.ln_f.weight.mul_(8.0)
        model.lm_head.weight.mul_(6.0)

    model_dir = tmp_path / "tiny-lm"
    model.save_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)
    return model_dir


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    return build_tiny_lm(tmp_path_factory.mktemp("models"))


@pytest.fixture(scope="session")
def tiny_model(tiny_model_dir):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    model = AutoModelForCausalLM.from_pretrained(tiny_model_dir).eval()
    tokenizer = AutoTokenizer.from_pretrained(tiny_model_dir)
    return model, tokenizer
