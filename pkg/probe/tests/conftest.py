import numpy as np
import pytest
import torch


class ByteTokenizer:
    """Toy byte-level tokenizer for the randomly initialized test model."""

    def __init__(self, vocab_size=97):
        self.vocab_size = vocab_size

    def encode(self, text):
        return [b % self.vocab_size for b in text.encode("utf-8")]


@pytest.fixture(scope="session")
def tiny_adapter():
    from transformers import GPT2Config, GPT2LMHeadModel

    from truncprobe.adapter import CausalLMAdapter

    torch.manual_seed(7)
    cfg = GPT2Config(vocab_size=97, n_positions=256, n_embd=32, n_layer=2,
                     n_head=2, attn_implementation="eager",
                     bos_token_id=0, eos_token_id=0)
    model = GPT2LMHeadModel(cfg)
    return CausalLMAdapter(model, ByteTokenizer(97), device="cpu")


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    rng = np.random.default_rng(3)
    d = tmp_path_factory.mktemp("corpora")
    words = ["the", "cache", "window", "token", "decay", "model", "probe",
             "budget", "layer", "query"]
    text = " ".join(rng.choice(words, size=4000))
    (d / "natural.txt").write_text(text)
    code = "\n".join(f"x{i} = fn_{i % 7}(x{max(i - 1, 0)}) + {i % 13}"
                     for i in range(1500))
    (d / "code.txt").write_text(code)
    return d


@pytest.fixture()
def probe_config(corpus_dir):
    from truncprobe.config import ProbeConfig

    return ProbeConfig(
        model_id="test/tiny-random-gpt2",
        domains={"natural": str(corpus_dir / "natural.txt")},
        n_prefixes=4, prefix_len=64, grid=(2, 4, 8, 16, 32),
        budgets=(8, 16, 32), protocols=("position_preserving",),
        seed=11,
    )
