"""Model loading, tokenization and pooled feature extraction."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer


class Encoder:
    """A frozen transformer encoder with mean pooling.

    Pooling excludes padding and special tokens, so a single-token
    example embeds to exactly that token's final hidden state.
    """

    def __init__(self, model_id: str, seq_len: int = 128, batch_size: int = 16):
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModel.from_pretrained(model_id)
        self.model.eval()
        self.seq_len = seq_len
        self.batch_size = batch_size

    @property
    def hidden_size(self) -> int:
        return int(self.model.config.hidden_size)

    def _batches(self, texts: list[str]):
        for start in range(0, len(texts), self.batch_size):
            yield texts[start:start + self.batch_size]

    def token_states(self, texts: list[str]):
        """Yield (last_hidden_states, content_token_mask) per batch."""
        for chunk in self._batches(texts):
            enc = self.tokenizer(chunk, padding=True, truncation=True,
                                 max_length=self.seq_len,
                                 return_special_tokens_mask=True,
                                 return_tensors="pt")
            special = enc.pop("special_tokens_mask")
            with torch.no_grad():
                out = self.model(**enc)
            mask = enc["attention_mask"].bool() & ~special.bool()
            yield out.last_hidden_state, mask

    def mean_over_tokens(self, texts: list[str]) -> np.ndarray:
        """Mean of final-layer states over every content token of every
        example (token-weighted task vector)."""
        total = torch.zeros(self.hidden_size, dtype=torch.float64)
        count = 0
        for states, mask in self.token_states(texts):
            total += states[mask].to(torch.float64).sum(dim=0)
            count += int(mask.sum())
        if count == 0:
            raise ValueError("no content tokens in dataset")
        return (total / count).numpy()

    def example_vectors(self, texts: list[str]) -> np.ndarray:
        """Mean-pooled vector per example (rows align with inputs)."""
        rows = []
        for states, mask in self.token_states(texts):
            denom = mask.sum(dim=1, keepdim=True).clamp(min=1)
            pooled = (states * mask.unsqueeze(-1)).sum(dim=1) / denom
            rows.append(pooled.to(torch.float64))
        return torch.cat(rows).numpy()


def read_text_dataset(path: str | Path, max_examples: int | None = None,
                      need_labels: bool = False,
                      segment_separator: str = " [SEP] "):
    """Read a JSON-lines text dataset: {"text": ...} or
    {"text_a": ..., "text_b": ...} plus an optional "label".

    Multi-segment examples are joined with a separator token.  Returns
    (texts, labels); labels is None when absent.
    """
    texts: list[str] = []
    labels: list = []
    have_labels = True
    for line_no, ln in enumerate(Path(path).read_text().splitlines(), start=1):
        if not ln.strip():
            continue
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}:{line_no}: invalid JSON ({e.msg})") from None
        if "text" in rec:
            texts.append(str(rec["text"]))
        elif "text_a" in rec:
            segs = [str(rec["text_a"])]
            if rec.get("text_b") is not None:
                segs.append(str(rec["text_b"]))
            texts.append(segment_separator.join(segs))
        else:
            raise ValueError(f"{path}:{line_no}: record lacks a text field")
        if "label" in rec:
            labels.append(rec["label"])
        else:
            have_labels = False
        if max_examples is not None and len(texts) >= max_examples:
            break
    if not texts:
        raise ValueError(f"{path}: dataset is empty")
    if need_labels and not have_labels:
        raise ValueError(f"{path}: this extraction needs labeled examples")
    return texts, (labels if have_labels else None)
