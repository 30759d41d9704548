"""Dump per-layer transformer hidden states to ULEMB01 embedding files."""

from .export import (
    ExportError,
    ExportJob,
    assemble,
    export_embeddings,
    plan_words,
    read_sentences,
    special_template,
    strip_diacritics,
)
from .writer import write_ulemb

__version__ = "0.1.0"
