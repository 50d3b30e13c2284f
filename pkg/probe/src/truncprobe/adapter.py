"""Model access: wraps a causal LM behind the two calls the harness needs,
next-token distributions (with optional absolute position indices) and
final-query attention scores."""

from __future__ import annotations

import inspect
import warnings
from typing import Optional, Sequence

import numpy as np
import torch


class CausalLMAdapter:
    """A causal LM plus tokenizer, evaluated one sequence at a time.

    `supports_position_ids` is probed from the forward signature; when the
    override is unavailable the harness falls back to the fresh protocol
    with a warning.
    """

    def __init__(self, model, tokenizer, device: str = "cpu"):
        self.model = model.to(device).eval()
        self.tokenizer = tokenizer
        self.device = device
        params = inspect.signature(model.forward).parameters
        self.supports_position_ids = "position_ids" in params

    @classmethod
    def from_pretrained(cls, model_id: str, device: str = "cpu",
                        dtype: str = "float32") -> "CausalLMAdapter":
        from transformers import AutoModelForCausalLM, AutoTokenizer
        torch_dtype = {"float32": torch.float32, "float16": torch.float16,
                       "bfloat16": torch.bfloat16}[dtype]
        model = AutoModelForCausalLM.from_pretrained(
            model_id, dtype=torch_dtype, attn_implementation="eager")
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        return cls(model, tokenizer, device=device)

    @property
    def vocab_size(self) -> int:
        return int(self.model.config.vocab_size)

    def encode_corpus(self, text: str) -> np.ndarray:
        ids = self.tokenizer.encode(text)
        arr = np.asarray(ids, dtype=np.int64)
        if arr.size == 0:
            raise ValueError("tokenizer produced an empty corpus")
        if arr.max() >= self.vocab_size:
            raise ValueError("tokenizer ids exceed the model vocabulary "
                             "(tokenizer mismatch)")
        return arr

    @torch.no_grad()
    def next_token_dist(self, token_ids: Sequence[int],
                        position_ids: Optional[Sequence[int]] = None) -> np.ndarray:
        """softmax over the final position's logits; float64 numpy output."""
        ids = torch.as_tensor(list(token_ids), dtype=torch.long,
                              device=self.device).unsqueeze(0)
        kwargs = {}
        if position_ids is not None:
            if not self.supports_position_ids:
                warnings.warn("model forward() lacks position_ids; "
                              "falling back to fresh indexing", stacklevel=2)
            else:
                kwargs["position_ids"] = torch.as_tensor(
                    list(position_ids), dtype=torch.long,
                    device=self.device).unsqueeze(0)
        logits = self.model(input_ids=ids, **kwargs).logits[0, -1].double()
        return torch.softmax(logits, dim=-1).cpu().numpy()

    @torch.no_grad()
    def final_query_attention(self, token_ids: Sequence[int]) -> np.ndarray:
        """Attention mass from the final query position, averaged over the
        last layer's heads; one score per context position."""
        ids = torch.as_tensor(list(token_ids), dtype=torch.long,
                              device=self.device).unsqueeze(0)
        out = self.model(input_ids=ids, output_attentions=True)
        if not out.attentions:
            raise ValueError("model did not return attentions; "
                             "load with attn_implementation='eager'")
        last = out.attentions[-1][0]          # (heads, T, T)
        return last[:, -1, :].mean(dim=0).double().cpu().numpy()
