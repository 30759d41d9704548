"""The ULEMB01 embedding container, word/subword pooling, and layer mixing.

File layout (all integers unsigned 32-bit little-endian):

    magic           8 bytes, ASCII "ULEMB01\\n"
    layer_count L   u32  (includes the embedding layer: 13 for base models)
    hidden_size H   u32
    sentence_count S u32
    meta_len        u32, followed by meta_len bytes of UTF-8 JSON metadata
    S sentence blocks:
        word_count W     u32
        subword_count T  u32
        W alignment ranges: (start u32, end u32), half-open into [0, T)
        L*T*H float32 little-endian values, layer-major then subword then dim

Special tokens ([CLS]/[SEP] and friends) are excluded before writing, so the
T stored positions are content subwords and the W ranges partition [0, T)
exactly.  Metadata carries at least the model id, language, tokenizer kind,
and pooling notes; writers targeting the experiment runner also include
``sentence_ids``, the sentence id per block in order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

MAGIC = b"ULEMB01\n"

_U32 = struct.Struct("<I")
_U32x2 = struct.Struct("<II")


@dataclass(frozen=True)
class EmbeddingFileHeader:
    layer_count: int
    hidden_size: int
    sentence_count: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.layer_count < 1 or self.hidden_size < 1:
            raise ValueError("layer_count and hidden_size must be >= 1")
        if self.sentence_count < 0:
            raise ValueError("sentence_count must be >= 0")


@dataclass
class SentenceEmbedding:
    """Per-layer subword vectors with the word -> subword alignment.

    ``values`` has shape (L, T, H) and dtype float32; ``alignment`` holds one
    half-open (start, end) range per word, ordered and contiguous over [0, T).
    """

    alignment: list[tuple[int, int]]
    values: np.ndarray

    @property
    def word_count(self) -> int:
        return len(self.alignment)

    @property
    def subword_count(self) -> int:
        return int(self.values.shape[1])

    def validate(self):
        if self.values.ndim != 3:
            raise ValueError(f"values must be (L, T, H), got shape {self.values.shape}")
        if self.values.dtype != np.float32:
            raise ValueError(f"values must be float32, got {self.values.dtype}")
        t = self.subword_count
        if not self.alignment:
            raise ValueError("a sentence needs at least one aligned word")
        expected_start = 0
        for start, end in self.alignment:
            if start != expected_start:
                raise ValueError(
                    f"alignment ranges must be ordered and contiguous; "
                    f"expected start {expected_start}, got {start}"
                )
            if end <= start:
                raise ValueError(f"empty alignment range ({start}, {end})")
            expected_start = end
        if expected_start != t:
            raise ValueError(
                f"alignment covers [0, {expected_start}) but the sentence has "
                f"{t} subwords"
            )


def write_embeddings(sentences: list[SentenceEmbedding], header: EmbeddingFileHeader) -> bytes:
    """Serialize to the ULEMB01 byte layout; refuses inconsistent inputs."""
    if header.sentence_count != len(sentences):
        raise ValueError(
            f"header says {header.sentence_count} sentences, got {len(sentences)}"
        )
    chunks = [MAGIC]
    chunks.append(_U32.pack(header.layer_count))
    chunks.append(_U32.pack(header.hidden_size))
    chunks.append(_U32.pack(header.sentence_count))
    meta_bytes = json.dumps(header.meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    chunks.append(_U32.pack(len(meta_bytes)))
    chunks.append(meta_bytes)
    for i, sent in enumerate(sentences):
        sent.validate()
        l, t, h = sent.values.shape
        if l != header.layer_count or h != header.hidden_size:
            raise ValueError(
                f"sentence {i}: values are ({l}, {t}, {h}), header wants "
                f"L={header.layer_count}, H={header.hidden_size}"
            )
        chunks.append(_U32x2.pack(sent.word_count, t))
        for start, end in sent.alignment:
            chunks.append(_U32x2.pack(start, end))
        chunks.append(np.ascontiguousarray(sent.values, dtype="<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated stream: wanted {n} bytes at offset {self.pos}, "
                f"{len(self.data) - self.pos} remain"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def read_embeddings(data: bytes) -> tuple[EmbeddingFileHeader, list[SentenceEmbedding]]:
    """Parse and validate a ULEMB01 byte stream."""
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise FormatError("bad magic: not a ULEMB01 stream")
    layer_count = r.u32()
    hidden_size = r.u32()
    sentence_count = r.u32()
    meta_len = r.u32()
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad metadata JSON: {exc}") from None
    try:
        header = EmbeddingFileHeader(
            layer_count=layer_count,
            hidden_size=hidden_size,
            sentence_count=sentence_count,
            meta=meta,
        )
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    sentences = []
    for _ in range(sentence_count):
        w = r.u32()
        t = r.u32()
        alignment = [_U32x2.unpack(r.take(8)) for _ in range(w)]
        n_floats = layer_count * t * hidden_size
        raw = r.take(4 * n_floats)
        values = np.frombuffer(raw, dtype="<f4").reshape(layer_count, t, hidden_size)
        sent = SentenceEmbedding(alignment=alignment, values=values)
        try:
            sent.validate()
        except ValueError as exc:
            raise FormatError(str(exc)) from None
        sentences.append(sent)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after payload")
    return header, sentences


def write_embeddings_file(path, sentences: list[SentenceEmbedding], header: EmbeddingFileHeader):
    with open(path, "wb") as f:
        f.write(write_embeddings(sentences, header))


def read_embeddings_file(path) -> tuple[EmbeddingFileHeader, list[SentenceEmbedding]]:
    with open(path, "rb") as f:
        return read_embeddings(f.read())


def sentence_index(header: EmbeddingFileHeader) -> dict[str, int]:
    """Map sentence id -> block position, from the ``sentence_ids`` metadata."""
    ids = header.meta.get("sentence_ids")
    if ids is None:
        raise FormatError("metadata lacks 'sentence_ids'; cannot address sentences")
    if len(ids) != header.sentence_count:
        raise FormatError(
            f"metadata lists {len(ids)} sentence ids for {header.sentence_count} sentences"
        )
    return {sid: i for i, sid in enumerate(ids)}


# ---------------------------------------------------------------------------
# Layer mixing

def softmax(x: np.ndarray) -> np.ndarray:
    shifted = np.asarray(x, dtype=np.float64) - np.max(x)
    e = np.exp(shifted)
    return e / e.sum()


@dataclass
class LayerMixer:
    """Learned softmax-weighted average over layers.

    The raw weights are unconstrained reals; mixing applies softmax and takes
    the convex combination, so the output is shift-invariant in the raw
    weights and bounded by the layer vectors.
    """

    raw_weights: np.ndarray

    def __post_init__(self):
        self.raw_weights = np.asarray(self.raw_weights, dtype=np.float64)
        if self.raw_weights.ndim != 1 or self.raw_weights.size < 1:
            raise ValueError("raw_weights must be a non-empty 1-d array")

    @property
    def layer_count(self) -> int:
        return int(self.raw_weights.size)

    def weights(self) -> np.ndarray:
        return softmax(self.raw_weights)

    def mix(self, vectors: np.ndarray) -> np.ndarray:
        return mix_layers(vectors, self)

    def backward(self, vectors: np.ndarray, grad_output: np.ndarray) -> np.ndarray:
        """Gradient of sum(grad_output * mix(vectors)) w.r.t. the raw weights."""
        vectors = np.asarray(vectors, dtype=np.float64)
        s = self.weights()
        grad_s = vectors @ np.asarray(grad_output, dtype=np.float64)
        return s * (grad_s - float(s @ grad_s))


def mix_layers(vectors: np.ndarray, mixer: LayerMixer) -> np.ndarray:
    """Softmax-weighted sum of the L layer vectors; float64 accumulation."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != mixer.layer_count:
        raise ValueError(
            f"expected ({mixer.layer_count}, H) layer vectors, got {vectors.shape}"
        )
    return mixer.weights() @ vectors


# ---------------------------------------------------------------------------
# Pooling

FIRST = "first"
LAST = "last"
TOP = "top"
MIX = "mix"


def _subword_position(se: SentenceEmbedding, word_index: int, strategy: str) -> int:
    if not 0 <= word_index < se.word_count:
        raise IndexError(
            f"word index {word_index} out of range for {se.word_count} words"
        )
    start, end = se.alignment[word_index]
    if strategy == FIRST:
        return start
    if strategy == LAST:
        return end - 1
    raise ValueError(f"unknown pooling strategy {strategy!r}")


def pool(
    se: SentenceEmbedding,
    word_index: int,
    strategy: str = LAST,
    layer: int | str = TOP,
    mixer: LayerMixer | None = None,
) -> np.ndarray:
    """Select one word's vector: first/last subword, at a layer or mixed.

    ``layer`` is an explicit index, "top" (the final layer, index L-1), or
    "mix" (softmax-weighted average over all layers using ``mixer``).
    """
    pos = _subword_position(se, word_index, strategy)
    n_layers = se.values.shape[0]
    if layer == MIX:
        if mixer is None:
            raise ValueError("layer='mix' needs a LayerMixer")
        return mixer.mix(se.values[:, pos, :])
    if layer == TOP:
        idx = n_layers - 1
    else:
        idx = int(layer)
        if not 0 <= idx < n_layers:
            raise IndexError(f"layer {idx} out of range for {n_layers} layers")
    return se.values[idx, pos, :]


def layer_stack(se: SentenceEmbedding, word_index: int, strategy: str = LAST) -> np.ndarray:
    """All L layer vectors of the selected subword, shape (L, H)."""
    pos = _subword_position(se, word_index, strategy)
    return se.values[:, pos, :]
