import numpy as np
import pytest

from probeval.corpus import Sentence, Token, Treebank
from probeval.embeddings import EmbeddingFileHeader, SentenceEmbedding
from probeval.subword import SENTENCEPIECE, WORDPIECE, Vocabulary


def make_vocab(pieces, kind=WORDPIECE, unk=None):
    unk = unk or ("[UNK]" if kind == WORDPIECE else "<unk>")
    all_pieces = list(pieces)
    if unk not in all_pieces:
        all_pieces.append(unk)
    return Vocabulary(pieces=tuple(all_pieces), kind=kind, unk_piece=unk)


def random_wordpiece_vocab(rng, alphabet="abcdef", n_pieces=30, max_len=4,
                           full_coverage=True):
    """Random WordPiece vocabulary; with ``full_coverage`` every single
    character is present both bare and with the continuation marker, so no
    in-alphabet word can hit a greedy dead end."""
    pieces = set()
    if full_coverage:
        for c in alphabet:
            pieces.add(c)
            pieces.add("##" + c)
    while len(pieces) < n_pieces:
        length = int(rng.integers(1, max_len + 1))
        body = "".join(rng.choice(list(alphabet), size=length))
        pieces.add(body if rng.random() < 0.5 else "##" + body)
    return make_vocab(sorted(pieces))


def random_splike_vocab(rng, alphabet="abcdef", n_pieces=30, max_len=4):
    pieces = set()
    while len(pieces) < n_pieces:
        length = int(rng.integers(1, max_len + 1))
        body = "".join(rng.choice(list(alphabet), size=length))
        pieces.add(body if rng.random() < 0.5 else "▁" + body)
    return make_vocab(sorted(pieces), kind=SENTENCEPIECE)


def random_word(rng, alphabet="abcdef", max_len=10, extra=""):
    length = int(rng.integers(1, max_len + 1))
    chars = list(alphabet) + list(extra)
    return "".join(rng.choice(chars, size=length))


def make_sentence(forms, sid, upos=None, feats=None, ner=None):
    tokens = []
    for i, form in enumerate(forms):
        tokens.append(
            Token(
                form=form,
                upos=upos[i] if upos else None,
                feats=feats[i] if feats else {},
                ner=ner[i] if ner else None,
            )
        )
    return Sentence(tokens=tokens, id=sid)


def make_treebank(language="fi", n_sentences=10, rng=None):
    rng = rng or np.random.default_rng(0)
    sentences = []
    for i in range(n_sentences):
        n = int(rng.integers(1, 8))
        forms = [random_word(rng) for _ in range(n)]
        sentences.append(make_sentence(forms, sid=f"synth:{i}"))
    return Treebank(language=language, sentences=sentences)


def make_sentence_embedding(word_subwords, n_layers, hidden, fill=None, rng=None):
    """Build a SentenceEmbedding from per-word subword counts.

    ``fill`` maps (layer, subword_position) -> H-vector; default is random.
    """
    t = sum(word_subwords)
    alignment = []
    start = 0
    for n in word_subwords:
        alignment.append((start, start + n))
        start += n
    if fill is not None:
        values = np.zeros((n_layers, t, hidden), dtype=np.float32)
        for l in range(n_layers):
            for p in range(t):
                values[l, p] = fill(l, p)
    else:
        rng = rng or np.random.default_rng(0)
        values = rng.standard_normal((n_layers, t, hidden)).astype(np.float32)
    return SentenceEmbedding(alignment=alignment, values=values)


def make_header(n_layers, hidden, sentence_ids, model="synthetic", **meta):
    return EmbeddingFileHeader(
        layer_count=n_layers,
        hidden_size=hidden,
        sentence_count=len(sentence_ids),
        meta={
            "model": model,
            "language": "xx",
            "tokenizer": "wordpiece",
            "pooling": "content subwords only",
            "sentence_ids": list(sentence_ids),
            **meta,
        },
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# End-to-end fixtures: datasets plus matching ULEMB01 files

def build_probe_fixture(
    out_dir,
    mode="gold",
    n_labels=3,
    forms_per_label=40,
    sizes=(30, 6, 6),
    n_layers=3,
    hidden=8,
    seed=0,
    signal="all",
    feature="Case",
    sid_prefix="fx",
):
    """Write a probing task dir and an embedding file; returns their paths.

    ``mode`` is "gold" (target-word vectors one-hot encode the label) or
    "random".  ``signal`` controls which target subword carries the label in
    gold mode: "all" puts it on every subword, "last" only on the final one
    (the first subword gets an uninformative constant).
    """
    from pathlib import Path

    from probeval.embeddings import write_embeddings_file
    from probeval.corpus import ProbingInstance
    from probeval.sampling import (
        ProbingTaskSpec,
        SplitConfig,
        sample_probing_split,
        write_probing_dataset,
        SPLIT_NAMES,
    )

    out_dir = Path(out_dir)
    gen = np.random.default_rng(seed)
    labels = [f"L{k}" for k in range(n_labels)]
    instances = []
    label_of_sentence = {}
    for label in labels:
        for f in range(forms_per_label):
            sid = f"{sid_prefix}:{label}:{f}"
            instances.append(
                ProbingInstance(
                    sentence_id=sid, token_index=1, label=label, form=f"{label.lower()}w{f}"
                )
            )
            label_of_sentence[sid] = labels.index(label)
    spec = ProbingTaskSpec(
        language="xx", feature=feature, upos="NOUN", label_set=tuple(labels)
    )
    cfg = SplitConfig(
        train_size=sizes[0], dev_size=sizes[1], test_size=sizes[2], seed=seed
    )
    ds = sample_probing_split(instances, spec, cfg)

    referenced = sorted(
        {i.sentence_id for split in SPLIT_NAMES for i in ds.split(split)}
    )
    sentences = []
    for sid in referenced:
        word_subwords = [1, 2, 1]  # target word (index 1) spans two subwords
        se = make_sentence_embedding(word_subwords, n_layers, hidden, rng=gen)
        if mode == "gold":
            onehot = np.zeros(hidden, dtype=np.float32)
            onehot[label_of_sentence[sid]] = 2.0
            if signal == "all":
                se.values[:, 1, :] = onehot
                se.values[:, 2, :] = onehot
            else:  # signal == "last"
                se.values[:, 2, :] = onehot
                se.values[:, 1, :] = 0.5  # constant: first subword uninformative
        sentences.append(se)
    header = make_header(n_layers, hidden, referenced, model=f"synthetic-{mode}")

    task_dir = out_dir / spec.name
    write_probing_dataset(ds, task_dir)
    emb_path = out_dir / f"{feature}-{mode}.ulemb"
    write_embeddings_file(emb_path, sentences, header)
    return task_dir, emb_path


def build_tagging_fixture(
    out_dir,
    task="pos",
    mode="gold",
    n_sentences=60,
    n_layers=3,
    hidden=8,
    seed=0,
):
    """Write a tagging dataset dir and an embedding file; returns their paths."""
    from pathlib import Path

    from probeval.embeddings import write_embeddings_file
    from probeval.sampling import (
        SPLIT_NAMES,
        SplitConfig,
        sample_tagging_split,
        write_tagging_dataset,
    )

    out_dir = Path(out_dir)
    gen = np.random.default_rng(seed)
    if task == "pos":
        tagset = ["NOUN", "VERB", "ADJ"]
    else:
        tagset = ["O", "B-LOC", "I-LOC", "B-PER"]
    sentences = []
    for i in range(n_sentences):
        n = int(gen.integers(2, 6))
        if task == "pos":
            # skewed like real POS distributions
            tags = [str(gen.choice(tagset, p=[0.6, 0.25, 0.15])) for _ in range(n)]
            sentences.append(
                make_sentence([f"w{i}_{j}" for j in range(n)], f"tg:{i}", upos=tags)
            )
        else:
            tags = []
            prev_ent = False
            for _ in range(n):
                if prev_ent and gen.random() < 0.4:
                    tags.append("I-LOC")
                    continue
                choice = str(gen.choice(["O", "B-LOC", "B-PER"]))
                tags.append(choice)
                prev_ent = choice == "B-LOC"
            sentences.append(
                make_sentence([f"w{i}_{j}" for j in range(n)], f"tg:{i}", ner=tags)
            )
    cfg = SplitConfig(train_size=2000, dev_size=200, test_size=200, seed=seed)
    ds = sample_tagging_split(sentences, task, cfg)
    write_tagging_dataset(ds, out_dir / "dataset")

    tag_index = {t: k for k, t in enumerate(tagset)}
    emb_sentences = []
    referenced = []
    for sent in sentences:
        referenced.append(sent.id)
        word_subwords = [2] * len(sent.tokens)
        se = make_sentence_embedding(word_subwords, n_layers, hidden, rng=gen)
        if mode == "gold":
            for w, tok in enumerate(sent.tokens):
                tag = tok.upos if task == "pos" else tok.ner
                onehot = np.zeros(hidden, dtype=np.float32)
                onehot[tag_index[tag]] = 2.0
                start, _ = se.alignment[w]
                se.values[n_layers - 1, start, :] = onehot  # first subword, top layer
        emb_sentences.append(se)
    header = make_header(n_layers, hidden, referenced, model=f"synthetic-{mode}")
    emb_path = out_dir / f"{task}-{mode}.ulemb"
    write_embeddings_file(emb_path, emb_sentences, header)
    return out_dir / "dataset", emb_path
