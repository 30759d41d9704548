import json
import os

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "a", "b", "c", "d", "k", "l",
    "##a", "##b", "##c", "##d", "##la",
    "ab", "##cd", "kala", "talo", "on", ".",
]


def build_wordpiece_tokenizer():
    from tokenizers import Tokenizer
    from tokenizers.models import WordPiece
    from tokenizers.processors import TemplateProcessing
    from transformers import PreTrainedTokenizerFast

    v = {p: i for i, p in enumerate(VOCAB)}
    core = Tokenizer(WordPiece(vocab=v, unk_token="[UNK]", max_input_chars_per_word=100))
    core.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", v["[CLS]"]), ("[SEP]", v["[SEP]"])],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=core,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )


def build_model_dir(path, n_layers=2, hidden=16, seed=0):
    import torch
    from transformers import BertConfig, BertModel

    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=hidden,
        num_hidden_layers=n_layers,
        num_attention_heads=2,
        intermediate_size=hidden * 2,
        max_position_embeddings=64,
    )
    model = BertModel(config)
    model.save_pretrained(path)
    build_wordpiece_tokenizer().save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    return str(build_model_dir(tmp_path_factory.mktemp("tinybert")))


@pytest.fixture
def sentences_jsonl(tmp_path):
    path = tmp_path / "sentences.jsonl"
    records = [
        {"id": "s:0", "tokens": [{"form": "kala"}, {"form": "on"}, {"form": "abcd"}, {"form": "."}]},
        {"id": "s:1", "tokens": [{"form": "talo"}, {"form": "zzz"}, {"form": "."}]},
        {"id": "s:2", "tokens": [{"form": "kl"}]},
    ]
    path.write_text(
        "\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8"
    )
    return path
