"""Treebank parsing: CoNLL-U and WikiAnn readers with a uniform sentence model.

Multiword-token range lines (``1-2``) and empty nodes (``3.1``) are dropped so
that the token sequence is the syntactic-word sequence a tagger sees.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .errors import ParseError

logger = logging.getLogger(__name__)

# Language codes with training data in the evaluation setup.  Other codes are
# accepted with a warning so the tooling generalizes to new treebanks.
KNOWN_LANGUAGES = frozenset(
    ["et", "fi", "hu", "myv", "mdf", "krl", "olo", "koi", "kpv", "sme", "sms"]
)

BIO_TAG_RE = re.compile(r"^(?:O|[BI]-[A-Z]+)$")

_MWT_ID_RE = re.compile(r"^\d+-\d+$")
_EMPTY_NODE_ID_RE = re.compile(r"^\d+\.\d+$")
_WORD_ID_RE = re.compile(r"^\d+$")


@dataclass
class Token:
    form: str
    lemma: str | None = None
    upos: str | None = None
    feats: dict[str, str] = field(default_factory=dict)
    ner: str | None = None

    def __post_init__(self):
        if not self.form:
            raise ValueError("token form must be non-empty")
        if self.ner is not None and not BIO_TAG_RE.match(self.ner):
            raise ValueError(f"invalid BIO tag: {self.ner!r}")


@dataclass
class Sentence:
    tokens: list[Token]
    id: str

    def __post_init__(self):
        if not self.tokens:
            raise ValueError(f"sentence {self.id!r} has no tokens")

    def __len__(self):
        return len(self.tokens)

    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]


@dataclass
class Treebank:
    language: str
    sentences: list[Sentence]

    def __post_init__(self):
        # "und" (undetermined) is the explicit opt-out
        if self.language != "und" and self.language not in KNOWN_LANGUAGES:
            logger.warning("language code %r is outside the known set", self.language)

    def __len__(self):
        return len(self.sentences)


@dataclass(frozen=True)
class ProbingInstance:
    """One probing example: a target token in context and its gold label."""

    sentence_id: str
    token_index: int
    label: str
    form: str


def parse_feats(feats_field: str) -> dict[str, str]:
    """Parse a UD FEATS column (``Case=Ine|Number=Sing``; ``_`` is empty)."""
    if feats_field in ("_", ""):
        return {}
    feats: dict[str, str] = {}
    for pair in feats_field.split("|"):
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ParseError(f"malformed FEATS entry {pair!r}")
        feats[key] = value
    return feats


def _format_feats(feats: dict[str, str]) -> str:
    if not feats:
        return "_"
    return "|".join(f"{k}={feats[k]}" for k in sorted(feats, key=str.lower))


def parse_conllu(text: str, language: str = "und", source: str = "conllu") -> Treebank:
    """Parse CoNLL-U text into a Treebank.

    One Sentence per block of non-blank lines; ``#`` comment lines, multiword
    range lines and empty nodes are skipped.  Sentence ids are
    ``{source}:{block_index}``.
    """
    sentences: list[Sentence] = []
    tokens: list[Token] = []

    def flush():
        if tokens:
            sentences.append(Sentence(tokens=list(tokens), id=f"{source}:{len(sentences)}"))
            tokens.clear()

    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ParseError(
                f"expected 10 tab-separated columns, got {len(cols)}", line=lineno
            )
        tok_id = cols[0]
        if _MWT_ID_RE.match(tok_id) or _EMPTY_NODE_ID_RE.match(tok_id):
            continue
        if not _WORD_ID_RE.match(tok_id):
            raise ParseError(f"malformed token id {tok_id!r}", line=lineno)
        if not cols[1]:
            raise ParseError("empty FORM column", line=lineno)
        try:
            feats = parse_feats(cols[5])
        except ParseError as exc:
            raise ParseError(str(exc), line=lineno) from None
        tokens.append(
            Token(
                form=cols[1],
                lemma=None if cols[2] == "_" else cols[2],
                upos=None if cols[3] == "_" else cols[3],
                feats=feats,
            )
        )
    flush()
    return Treebank(language=language, sentences=sentences)


def to_conllu(sentences: list[Sentence]) -> str:
    """Serialize sentences back to CoNLL-U (FORM/LEMMA/UPOS/FEATS columns)."""
    blocks = []
    for sent in sentences:
        lines = []
        for i, tok in enumerate(sent.tokens, start=1):
            lines.append(
                "\t".join(
                    [
                        str(i),
                        tok.form,
                        tok.lemma if tok.lemma is not None else "_",
                        tok.upos if tok.upos is not None else "_",
                        "_",
                        _format_feats(tok.feats),
                        "_",
                        "_",
                        "_",
                        "_",
                    ]
                )
            )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


_LANG_PREFIX_RE = re.compile(r"^[a-z]{2,3}:")


def parse_wikiann(text: str, language: str = "und", source: str = "wikiann") -> Treebank:
    """Parse WikiAnn 2-column data (``token<TAB>BIO-tag``, blank-line separated).

    Tokens may carry a ``xx:`` language prefix, which is stripped.  ``I-X``
    after ``O`` or ``I-Y`` is accepted here; the span extractor repairs such
    openings to ``B-X``.
    """
    sentences: list[Sentence] = []
    tokens: list[Token] = []

    def flush():
        if tokens:
            sentences.append(Sentence(tokens=list(tokens), id=f"{source}:{len(sentences)}"))
            tokens.clear()

    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            flush()
            continue
        cols = line.split("\t")
        if len(cols) != 2:
            raise ParseError(
                f"expected 2 tab-separated columns, got {len(cols)}", line=lineno
            )
        form, tag = cols
        form = _LANG_PREFIX_RE.sub("", form, count=1)
        if not form:
            raise ParseError("empty token", line=lineno)
        if not BIO_TAG_RE.match(tag):
            raise ParseError(f"tag {tag!r} outside the BIO grammar", line=lineno)
        tokens.append(Token(form=form, ner=tag))
    flush()
    return Treebank(language=language, sentences=sentences)


def extract_morph_instances(
    tb: Treebank, feature: str, upos: str
) -> list[ProbingInstance]:
    """Collect one instance per token matching ``upos`` and carrying ``feature``."""
    instances = []
    for sent in tb.sentences:
        for i, tok in enumerate(sent.tokens):
            if tok.upos == upos and feature in tok.feats:
                instances.append(
                    ProbingInstance(
                        sentence_id=sent.id,
                        token_index=i,
                        label=tok.feats[feature],
                        form=tok.form,
                    )
                )
    return instances
