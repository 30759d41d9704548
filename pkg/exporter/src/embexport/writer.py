"""ULEMB01 writer.

Byte layout (integers are unsigned 32-bit little-endian):

    magic            8 bytes ASCII "ULEMB01\\n"
    layer_count L    u32   (transformer layers + the embedding layer)
    hidden_size H    u32
    sentence_count S u32
    meta_len         u32, then meta_len bytes of UTF-8 JSON metadata
    S sentence blocks:
        word_count W    u32
        subword_count T u32
        W ranges        (start u32, end u32), half-open, partitioning [0, T)
        values          L*T*H float32 LE, C order of (L, T, H)

T counts content subwords only; special tokens are never written.  Metadata
includes "sentence_ids" (one id per block, in order) so readers can address
sentences.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ULEMB01\n"
_U32 = struct.Struct("<I")
_U32x2 = struct.Struct("<II")


class UlembWriteError(ValueError):
    pass


def _check_sentence(i, alignment, values):
    if values.ndim != 3:
        raise UlembWriteError(f"sentence {i}: values must be (L, T, H)")
    t = values.shape[1]
    expected = 0
    for start, end in alignment:
        if start != expected or end <= start:
            raise UlembWriteError(
                f"sentence {i}: ranges must be contiguous and non-empty"
            )
        expected = end
    if expected != t:
        raise UlembWriteError(
            f"sentence {i}: ranges cover [0, {expected}), values have T={t}"
        )


def write_ulemb(path, sentences, layer_count: int, hidden_size: int, meta: dict):
    """Write sentence blocks to ``path``.

    ``sentences`` is a list of (alignment, values) pairs: a list of (start,
    end) ranges per word plus a float32 array of shape (L, T, H).
    """
    chunks = [MAGIC]
    chunks.append(_U32.pack(layer_count))
    chunks.append(_U32.pack(hidden_size))
    chunks.append(_U32.pack(len(sentences)))
    meta_bytes = json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    chunks.append(_U32.pack(len(meta_bytes)))
    chunks.append(meta_bytes)
    for i, (alignment, values) in enumerate(sentences):
        values = np.ascontiguousarray(values, dtype="<f4")
        _check_sentence(i, alignment, values)
        l, t, h = values.shape
        if l != layer_count or h != hidden_size:
            raise UlembWriteError(
                f"sentence {i}: shape ({l}, {t}, {h}) does not match header "
                f"L={layer_count}, H={hidden_size}"
            )
        chunks.append(_U32x2.pack(len(alignment), t))
        for start, end in alignment:
            chunks.append(_U32x2.pack(start, end))
        chunks.append(values.tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))
