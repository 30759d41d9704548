"""Subword vocabularies, segmentation, and cross-language tokenizer diagnostics.

Two segmentation families are supported, differing in how they treat
characters missing from the vocabulary:

* ``wordpiece``: greedy longest-match-first; any unmatchable position makes
  the whole whitespace-delimited word ``[UNK]``.
* ``sentencepiece``: unknown characters are deleted and the residue is
  segmented, so information loss is per-character rather than per-word.

Diagnostics (missing rate, subword length, character length, fertility) are
computed over deduplicated word *types*; length and fertility statistics
cover the non-UNK types only.
"""

from __future__ import annotations

import csv
import io
import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParseError

WORDPIECE = "wordpiece"
SENTENCEPIECE = "sentencepiece"

# Words longer than this segment to UNK outright; guards pathological inputs.
MAX_WORD_CHARS = 512

_DEFAULT_UNK = {WORDPIECE: "[UNK]", SENTENCEPIECE: "<unk>"}
_DEFAULT_CONTINUATION = "##"
_DEFAULT_WORD_BEGIN = "▁"  # ▁


@dataclass(frozen=True)
class Vocabulary:
    pieces: tuple[str, ...]
    kind: str
    unk_piece: str
    continuation_marker: str = _DEFAULT_CONTINUATION
    word_begin_marker: str = _DEFAULT_WORD_BEGIN
    piece_set: frozenset[str] = field(init=False)
    alphabet: frozenset[str] = field(init=False)
    max_piece_chars: int = field(init=False)

    def __post_init__(self):
        if self.kind not in (WORDPIECE, SENTENCEPIECE):
            raise ValueError(f"unknown tokenizer kind {self.kind!r}")
        seen = set()
        for p in self.pieces:
            if p in seen:
                raise ParseError(f"duplicate piece {p!r}")
            seen.add(p)
        if self.unk_piece not in seen:
            raise ParseError(f"unk piece {self.unk_piece!r} missing from vocabulary")
        alphabet = set()
        longest = 1
        for p in self.pieces:
            stripped = self.strip_markers(p)
            alphabet.update(stripped)
            longest = max(longest, len(stripped))
        object.__setattr__(self, "piece_set", frozenset(seen))
        object.__setattr__(self, "alphabet", frozenset(alphabet))
        object.__setattr__(self, "max_piece_chars", longest)

    def __len__(self):
        return len(self.pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self.piece_set

    def strip_markers(self, piece: str) -> str:
        if self.kind == WORDPIECE and piece.startswith(self.continuation_marker):
            return piece[len(self.continuation_marker):]
        if self.kind == SENTENCEPIECE and piece.startswith(self.word_begin_marker):
            return piece[len(self.word_begin_marker):]
        return piece

    def add_piece(self, piece: str) -> "Vocabulary":
        """Return a new vocabulary with ``piece`` appended."""
        return Vocabulary(
            pieces=self.pieces + (piece,),
            kind=self.kind,
            unk_piece=self.unk_piece,
            continuation_marker=self.continuation_marker,
            word_begin_marker=self.word_begin_marker,
        )


@dataclass(frozen=True)
class Segmentation:
    word: str
    pieces: tuple[str, ...]
    is_unk: bool
    deleted_chars: int = 0


def load_vocab(
    path: str | Path,
    kind: str = WORDPIECE,
    unk_piece: str | None = None,
    continuation_marker: str = _DEFAULT_CONTINUATION,
    word_begin_marker: str = _DEFAULT_WORD_BEGIN,
) -> Vocabulary:
    """Load a vocabulary file.

    WordPiece files are newline-separated piece lists; SentencePiece-style
    files may carry a tab-separated score per line, which is ignored.
    """
    pieces = []
    text = Path(path).read_text(encoding="utf-8")
    for line in text.split("\n"):
        if not line:
            continue
        piece = line.split("\t")[0] if kind == SENTENCEPIECE else line
        pieces.append(piece)
    return Vocabulary(
        pieces=tuple(pieces),
        kind=kind,
        unk_piece=unk_piece or _DEFAULT_UNK[kind],
        continuation_marker=continuation_marker,
        word_begin_marker=word_begin_marker,
    )


def _check_word(word: str):
    if not word:
        raise ValueError("cannot segment an empty word")
    if any(c.isspace() for c in word):
        raise ValueError(f"word {word!r} contains whitespace")


def wordpiece_segment(vocab: Vocabulary, word: str) -> Segmentation:
    """Greedy longest-match-first segmentation with whole-word UNK fallback.

    The first piece is the longest vocabulary prefix of the word; subsequent
    pieces are matched with the continuation marker prepended.  There is no
    backtracking: a dead end anywhere maps the entire word to the UNK piece.
    """
    _check_word(word)
    unk = Segmentation(word=word, pieces=(vocab.unk_piece,), is_unk=True)
    if len(word) > MAX_WORD_CHARS:
        return unk
    pieces = []
    pos = 0
    n = len(word)
    while pos < n:
        if word[pos] not in vocab.alphabet:
            return unk
        marker = vocab.continuation_marker if pos > 0 else ""
        limit = min(n, pos + vocab.max_piece_chars)
        match = None
        for end in range(limit, pos, -1):
            candidate = marker + word[pos:end]
            if candidate in vocab.piece_set:
                match = (candidate, end)
                break
        if match is None:
            return unk
        pieces.append(match[0])
        pos = match[1]
    return Segmentation(word=word, pieces=tuple(pieces), is_unk=False)


def splike_segment(vocab: Vocabulary, word: str) -> Segmentation:
    """Delete unknown characters, then greedily segment the residue.

    The word-begin marker is applied when matching the first piece.  A residue
    character that no piece can cover in context is deleted as well (counted in
    ``deleted_chars``), so the emitted pieces always concatenate to the word
    minus its deleted characters.  An empty residue yields the UNK piece.
    """
    _check_word(word)
    kept = [c for c in word if c in vocab.alphabet]
    deleted = len(word) - len(kept)
    if len(word) > MAX_WORD_CHARS:
        return Segmentation(
            word=word, pieces=(vocab.unk_piece,), is_unk=True, deleted_chars=len(word)
        )
    if not kept:
        return Segmentation(
            word=word, pieces=(vocab.unk_piece,), is_unk=True, deleted_chars=deleted
        )
    pieces = []
    pos = 0
    n = len(kept)
    while pos < n:
        at_start = not pieces
        limit = min(n, pos + vocab.max_piece_chars)
        match = None
        for end in range(limit, pos, -1):
            chunk = "".join(kept[pos:end])
            if at_start and (vocab.word_begin_marker + chunk) in vocab.piece_set:
                match = (vocab.word_begin_marker + chunk, end)
                break
            if chunk in vocab.piece_set:
                match = (chunk, end)
                break
        if match is None:
            deleted += 1
            pos += 1
            continue
        pieces.append(match[0])
        pos = match[1]
    if not pieces:
        return Segmentation(
            word=word, pieces=(vocab.unk_piece,), is_unk=True, deleted_chars=len(word)
        )
    return Segmentation(word=word, pieces=tuple(pieces), is_unk=False, deleted_chars=deleted)


def segment(vocab: Vocabulary, word: str) -> Segmentation:
    """Dispatch to the segmenter matching the vocabulary's kind."""
    if vocab.kind == WORDPIECE:
        return wordpiece_segment(vocab, word)
    return splike_segment(vocab, word)


# Letters whose diacritic is a stroke rather than a combining mark, so
# canonical decomposition leaves them untouched.
_FOLD_TABLE = str.maketrans(
    {"đ": "d", "ŧ": "t", "ŋ": "n", "Đ": "D", "Ŧ": "T", "Ŋ": "N"}
)


def strip_diacritics(text: str) -> str:
    """Remove combining marks after canonical decomposition, then fold strokes."""
    decomposed = unicodedata.normalize("NFD", text)
    without_marks = "".join(c for c in decomposed if not unicodedata.combining(c))
    return without_marks.translate(_FOLD_TABLE)


@dataclass(frozen=True)
class TokenizerStats:
    n_types: int
    missing_rate: float
    mean_subword_len: float | None
    std_subword_len: float | None
    mean_char_len: float | None
    fertility: float | None

    def as_row(self) -> dict[str, object]:
        def fmt(v):
            return "" if v is None else v

        return {
            "types": self.n_types,
            "missing_pct": 100.0 * self.missing_rate,
            "subword_length_mean": fmt(self.mean_subword_len),
            "subword_length_std": fmt(self.std_subword_len),
            "character_length": fmt(self.mean_char_len),
            "fertility": fmt(self.fertility),
        }


def tokenizer_stats(vocab: Vocabulary, types: list[str]) -> TokenizerStats:
    """Segment every word type and summarize coverage and granularity.

    ``types`` must be deduplicated word types, not running tokens.  When every
    type maps to UNK the length/fertility fields are None.
    """
    if not types:
        raise ValueError("types list must be non-empty")
    n_unk = 0
    piece_lens = []
    char_lens = []
    piece_counts = []
    for word in types:
        seg = segment(vocab, word)
        if seg.is_unk:
            n_unk += 1
            continue
        piece_lens.extend(len(vocab.strip_markers(p)) for p in seg.pieces)
        char_lens.append(len(word))
        piece_counts.append(len(seg.pieces))
    n = len(types)
    if not piece_counts:
        return TokenizerStats(
            n_types=n,
            missing_rate=n_unk / n,
            mean_subword_len=None,
            std_subword_len=None,
            mean_char_len=None,
            fertility=None,
        )
    mean_len = sum(piece_lens) / len(piece_lens)
    var = sum((x - mean_len) ** 2 for x in piece_lens) / len(piece_lens)
    return TokenizerStats(
        n_types=n,
        missing_rate=n_unk / n,
        mean_subword_len=mean_len,
        std_subword_len=math.sqrt(var),
        mean_char_len=sum(char_lens) / len(char_lens),
        fertility=sum(piece_counts) / len(piece_counts),
    )


def stats_csv(rows: dict[str, TokenizerStats], vocab_sizes: dict[str, int]) -> str:
    """Render per-label diagnostics as CSV, one row per label."""
    out = io.StringIO()
    fields = [
        "label",
        "vocab_size",
        "types",
        "missing_pct",
        "subword_length_mean",
        "subword_length_std",
        "character_length",
        "fertility",
    ]
    writer = csv.DictWriter(out, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for label in sorted(rows):
        row = {"label": label, "vocab_size": vocab_sizes.get(label, "")}
        row.update(rows[label].as_row())
        writer.writerow(row)
    return out.getvalue()
