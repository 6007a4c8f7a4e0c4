import json
from pathlib import Path

import pytest
import torch
from transformers import BertConfig, BertModel, BertTokenizer

WORDS = ["the", "a", "cat", "dog", "bird", "runs", "sleeps", "flies", "eats",
         "red", "blue", "green", "fast", "slow", "happy", "sad", "big",
         "small", "house", "tree", "river", "stone", "cloud", "light"]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory) -> str:
    """A small randomly initialized BERT saved locally (no downloads)."""
    out = tmp_path_factory.mktemp("tiny-bert")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS
    vocab_file = out / "vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n")
    tokenizer = BertTokenizer(str(vocab_file))
    tokenizer.save_pretrained(out)
    config = BertConfig(vocab_size=len(vocab), hidden_size=32,
                        num_hidden_layers=2, num_attention_heads=2,
                        intermediate_size=64, max_position_embeddings=64)
    torch.manual_seed(1234)
    BertModel(config).save_pretrained(out)
    return str(out)


def write_dataset(path: Path, rows: list[dict]) -> str:
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return str(path)


@pytest.fixture()
def labeled_dataset(tmp_path):
    """Ten labeled examples: label correlates with the subject word."""
    rows = []
    for i in range(10):
        animal = ["cat", "dog"][i % 2]
        verb = ["runs", "sleeps", "eats", "flies", "fast"][i % 5]
        rows.append({"text": f"the {animal} {verb}", "label": i % 2})
    return write_dataset(tmp_path / "taskA.jsonl", rows)
