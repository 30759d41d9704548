"""Export per-layer hidden states of a pretrained model to ULEMB01.

Alignment is computed by incremental per-word tokenization: each word is
tokenized on its own and its pieces are offset into the running sequence.
Words the tokenizer maps to nothing (SentencePiece-style deletion of unknown
characters) and words beyond the sequence-length budget keep their position
as a single all-zero vector, flagged in the file metadata, so the exported
word count always equals the input word count.  Sentences with unusable
words (empty forms) are skipped and recorded.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .writer import write_ulemb

logger = logging.getLogger("embexport")

ZERO_VANISHED = "vanished"
ZERO_TRUNCATED = "truncated"

_STROKE_FOLD = str.maketrans(
    {"đ": "d", "ŧ": "t", "ŋ": "n", "Đ": "D", "Ŧ": "T", "Ŋ": "N"}
)


def strip_diacritics(text: str) -> str:
    decomposed = unicodedata.normalize("NFD", text)
    kept = "".join(c for c in decomposed if not unicodedata.combining(c))
    return kept.translate(_STROKE_FOLD)


class ExportError(RuntimeError):
    pass


@dataclass
class ExportJob:
    model_id: str
    input_path: str | Path
    output_path: str | Path
    device: str = "cpu"
    max_length: int = 512
    strip_diacritics: bool = False
    language: str | None = None


@dataclass
class WordPlan:
    """Per-word tokenization outcome: subword ids, or a zero placeholder."""

    ids: list[int] = field(default_factory=list)
    zero_reason: str | None = None


class SentenceSkip(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


def special_template(tokenizer) -> tuple[list[int], list[int]]:
    """Infer the special-token prefix/suffix the tokenizer wraps around text."""
    probes = ["a", "x", "0", "the"]
    if tokenizer.unk_token:
        probes.append(tokenizer.unk_token)
    for probe in probes:
        content = tokenizer(probe, add_special_tokens=False)["input_ids"]
        if not content:
            continue
        enc = tokenizer(probe, add_special_tokens=True, return_special_tokens_mask=True)
        full, mask = enc["input_ids"], enc["special_tokens_mask"]
        inner = [i for i, m in zip(full, mask) if m == 0]
        if inner != content:
            continue
        first = mask.index(0)
        last = len(mask) - 1 - mask[::-1].index(0)
        return full[:first], full[last + 1 :]
    raise ExportError("cannot infer the tokenizer's special-token template")


def plan_words(tokenizer, words: list[str], budget: int) -> list[WordPlan]:
    """Tokenize word-by-word under a subword budget.

    Raises SentenceSkip for unusable words (empty or whitespace-only forms).
    Once the budget is exhausted, every remaining word becomes a zero
    placeholder flagged "truncated".
    """
    plans = []
    used = 0
    truncating = False
    for w, word in enumerate(words):
        if not word or not word.strip():
            raise SentenceSkip(f"word {w} has an unusable surface form {word!r}")
        ids = tokenizer(word, add_special_tokens=False)["input_ids"]
        if not ids:
            plans.append(WordPlan(zero_reason=ZERO_VANISHED))
            continue
        if truncating or used + len(ids) > budget:
            truncating = True
            plans.append(WordPlan(zero_reason=ZERO_TRUNCATED))
            continue
        plans.append(WordPlan(ids=list(ids)))
        used += len(ids)
    return plans


def assemble(hidden: np.ndarray, plans: list[WordPlan]) -> tuple[list[tuple[int, int]], np.ndarray]:
    """Build (alignment, values) from content hidden states and word plans.

    ``hidden`` holds the (L, T_real, H) states of the real subwords in plan
    order; zero-placeholder words get one all-zero position spliced in.
    """
    n_layers, _, hidden_size = hidden.shape
    total = sum(len(p.ids) if p.zero_reason is None else 1 for p in plans)
    values = np.zeros((n_layers, total, hidden_size), dtype=np.float32)
    alignment = []
    out_pos = 0
    real_pos = 0
    for plan in plans:
        if plan.zero_reason is None:
            k = len(plan.ids)
            values[:, out_pos : out_pos + k, :] = hidden[:, real_pos : real_pos + k, :]
            real_pos += k
        else:
            k = 1
        alignment.append((out_pos, out_pos + k))
        out_pos += k
    return alignment, values


def read_sentences(path) -> list[tuple[str, list[str]]]:
    """Read JSON-lines sentence records: {"id": ..., "tokens": [{"form": ...}]}."""
    out = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            sid = rec["id"]
            if sid in seen:
                raise ExportError(f"line {lineno}: duplicate sentence id {sid!r}")
            seen.add(sid)
            words = [
                t["form"] if isinstance(t, dict) else t for t in rec["tokens"]
            ]
            out.append((sid, words))
    return out


def export_embeddings(job: ExportJob) -> dict:
    """Run the export; returns a summary dict (also stored as file metadata)."""
    import torch
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(job.model_id)
        model = AutoModel.from_pretrained(job.model_id)
    except OSError as exc:
        raise ExportError(f"cannot load model {job.model_id!r}: {exc}") from exc
    model.eval()
    model.to(job.device)

    n_layers = model.config.num_hidden_layers + 1  # embedding layer included
    hidden_size = model.config.hidden_size
    prefix, suffix = special_template(tokenizer)
    budget = job.max_length - len(prefix) - len(suffix)
    if budget < 1:
        raise ExportError(f"max_length {job.max_length} leaves no room for content")

    sentences = read_sentences(job.input_path)
    blocks = []
    sentence_ids = []
    zero_padded = []
    skipped = []
    for sid, words in sentences:
        if job.strip_diacritics:
            words = [strip_diacritics(w) for w in words]
        try:
            plans = plan_words(tokenizer, words, budget)
        except SentenceSkip as skip:
            logger.warning("skipping sentence %s: %s", sid, skip.reason)
            skipped.append([sid, skip.reason])
            continue
        real_ids = [i for p in plans for i in p.ids]
        if real_ids:
            input_ids = torch.tensor([prefix + real_ids + suffix], device=job.device)
            with torch.no_grad():
                out = model(input_ids=input_ids, output_hidden_states=True)
            stacked = torch.stack(out.hidden_states, dim=0)[:, 0, :, :]
            content = stacked[:, len(prefix) : len(prefix) + len(real_ids), :]
            hidden = content.to("cpu").numpy().astype(np.float32, copy=False)
        else:
            hidden = np.zeros((n_layers, 0, hidden_size), dtype=np.float32)
        alignment, values = assemble(hidden, plans)
        for w, plan in enumerate(plans):
            if plan.zero_reason is not None:
                zero_padded.append([sid, w, plan.zero_reason])
                if plan.zero_reason == ZERO_TRUNCATED:
                    logger.warning(
                        "sentence %s: word %d beyond the %d-subword budget", sid, w, budget
                    )
        blocks.append((alignment, values))
        sentence_ids.append(sid)

    meta = {
        "model": job.model_id,
        "language": job.language or "und",
        "tokenizer": type(tokenizer).__name__,
        "pooling": "content subwords only; special tokens excluded",
        "max_length": job.max_length,
        "strip_diacritics": job.strip_diacritics,
        "sentence_ids": sentence_ids,
        "zero_padded_words": zero_padded,
        "skipped_sentences": skipped,
    }
    out_path = Path(job.output_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=out_path.parent, prefix=out_path.name, suffix=".tmp"
    )
    os.close(fd)
    try:
        write_ulemb(tmp_name, blocks, n_layers, hidden_size, meta)
        os.replace(tmp_name, out_path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.info(
        "wrote %s: %d sentences, L=%d, H=%d, %d zero-padded words, %d skipped",
        out_path, len(blocks), n_layers, hidden_size, len(zero_padded), len(skipped),
    )
    return meta
