"""Constrained probing/tagging dataset generation and task enumeration.

Probing splits partition target word forms (case-folded) across
train/dev/test, so no form is ever seen in two splits, and cap per-split
class imbalance at ``max_imbalance`` (majority/minority instance counts).

All randomness flows through ``numpy.random.Generator(PCG64(seed))``; PCG64
is a named, documented algorithm with stable streams, so identical seeds
reproduce splits byte-for-byte across platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .corpus import ProbingInstance, Sentence, Token, Treebank, extract_morph_instances
from .errors import InfeasibleSplitError
from .subword import strip_diacritics

SPLIT_NAMES = ("train", "dev", "test")


@dataclass(frozen=True)
class ProbingTaskSpec:
    language: str
    feature: str
    upos: str
    label_set: tuple[str, ...]

    def __post_init__(self):
        if len(self.label_set) < 2:
            raise ValueError("a probing task needs at least 2 labels")

    @property
    def name(self) -> str:
        return f"{self.language}_{self.feature}_{self.upos}"


@dataclass(frozen=True)
class SplitConfig:
    train_size: int = 2000
    dev_size: int = 200
    test_size: int = 200
    max_imbalance: int = 3
    seed: int = 0

    def __post_init__(self):
        if min(self.train_size, self.dev_size, self.test_size) <= 0:
            raise ValueError("split sizes must be positive")
        if self.max_imbalance < 1:
            raise ValueError("max_imbalance must be >= 1")

    def sizes(self) -> dict[str, int]:
        return {"train": self.train_size, "dev": self.dev_size, "test": self.test_size}


@dataclass
class ProbingDataset:
    spec: ProbingTaskSpec
    config: SplitConfig
    train: list[ProbingInstance]
    dev: list[ProbingInstance]
    test: list[ProbingInstance]

    def split(self, name: str) -> list[ProbingInstance]:
        return getattr(self, name)


@dataclass
class TaggingDataset:
    task: str  # "pos" | "ner"
    config: SplitConfig
    train: list[Sentence]
    dev: list[Sentence]
    test: list[Sentence]

    def split(self, name: str) -> list[Sentence]:
        return getattr(self, name)


def _form_key(form: str) -> str:
    return form.casefold()


def _shuffled(items: list, rng: np.random.Generator) -> list:
    order = rng.permutation(len(items))
    return [items[i] for i in order]


def _fill_levels(avail: dict[str, int], size: int, cap: int) -> int:
    """Smallest per-label ceiling T with sum(min(avail, T)) >= size, or raise.

    The returned T respects ``T <= cap * min(avail)`` so that sampled counts
    can never violate the imbalance cap.
    """
    labels = list(avail)
    c_min = min(avail.values())
    if sum(min(c, cap * c_min) for c in avail.values()) < size:
        scarce = min(labels, key=lambda l: (avail[l], l))
        raise InfeasibleSplitError(
            f"cannot reach {size} instances while majority/minority <= {cap}; "
            f"rarest label {scarce!r} has only {avail[scarce]} instances available",
            constraint="imbalance-cap",
        )
    lo, hi = 1, cap * c_min
    while lo < hi:
        mid = (lo + hi) // 2
        if sum(min(c, mid) for c in avail.values()) >= size:
            hi = mid
        else:
            lo = mid + 1
    return lo


def _allocate_counts(
    avail: dict[str, int], size: int, cap: int, rng: np.random.Generator
) -> dict[str, int]:
    """Decide how many instances of each label a split takes."""
    labels = sorted(avail)
    if size < len(labels):
        raise InfeasibleSplitError(
            f"split size {size} is smaller than the label count {len(labels)}",
            constraint="size-vs-labels",
        )
    missing = [l for l in labels if avail[l] == 0]
    if missing:
        raise InfeasibleSplitError(
            f"labels {missing} have no instances available in this split",
            constraint="label-presence",
        )
    if cap == 1 and size % len(labels):
        raise InfeasibleSplitError(
            f"size {size} cannot be split evenly over {len(labels)} labels "
            f"under a 1-to-1 imbalance cap",
            constraint="imbalance-cap",
        )
    level = _fill_levels(avail, size, cap)
    counts = {l: min(avail[l], level) for l in labels}
    overshoot = sum(counts.values()) - size
    if overshoot:
        at_level = _shuffled([l for l in labels if counts[l] == level], rng)
        for l in at_level[:overshoot]:
            counts[l] -= 1
    assert sum(counts.values()) == size
    assert max(counts.values()) <= cap * min(counts.values())
    return counts


def sample_probing_split(
    instances: list[ProbingInstance], spec: ProbingTaskSpec, cfg: SplitConfig
) -> ProbingDataset:
    """Sample a form-disjoint, imbalance-capped train/dev/test probing dataset.

    Deterministic for a given (instances, spec, cfg).  Raises
    InfeasibleSplitError naming the binding constraint when the data cannot
    support the requested sizes.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    labels = sorted(spec.label_set)
    retained = [inst for inst in instances if inst.label in spec.label_set]
    if not retained:
        raise InfeasibleSplitError(
            "no instances carry any retained label", constraint="label-presence"
        )

    by_form: dict[str, list[ProbingInstance]] = {}
    for inst in sorted(retained, key=lambda i: (i.sentence_id, i.token_index)):
        by_form.setdefault(_form_key(inst.form), []).append(inst)
    form_labels = {
        fk: {i.label for i in insts} for fk, insts in by_form.items()
    }
    label_forms: dict[str, list[str]] = {l: [] for l in labels}
    for fk in sorted(by_form):
        for l in form_labels[fk]:
            label_forms[l].append(fk)

    sizes = cfg.sizes()
    assignment: dict[str, str] = {}  # form key -> split name
    split_counts = {s: 0 for s in SPLIT_NAMES}

    # Every retained label must be reachable from every split: seed each
    # (label, split) pair with one form carrying that label.  Rarest first,
    # smallest splits first, so scarce forms go where they are hardest to get.
    for label in sorted(labels, key=lambda l: (len(label_forms[l]), l)):
        candidates = _shuffled(label_forms[label], rng)
        for split in ("test", "dev", "train"):
            if any(
                assignment.get(fk) == split
                for fk in label_forms[label]
            ):
                continue
            free = next((fk for fk in candidates if fk not in assignment), None)
            if free is None:
                raise InfeasibleSplitError(
                    f"label {label!r} has too few distinct target forms to "
                    f"be placed in every split",
                    constraint="form-disjointness",
                )
            assignment[free] = split
            split_counts[split] += len(by_form[free])

    # Distribute the remaining forms toward the split with the largest
    # relative deficit; every form is assigned so later sampling has the
    # widest possible pool.
    remaining = _shuffled([fk for fk in sorted(by_form) if fk not in assignment], rng)
    for fk in remaining:
        split = max(
            SPLIT_NAMES, key=lambda s: (sizes[s] - split_counts[s]) / sizes[s]
        )
        assignment[fk] = split
        split_counts[split] += len(by_form[fk])

    splits: dict[str, list[ProbingInstance]] = {}
    for split in SPLIT_NAMES:
        pool: dict[str, list[ProbingInstance]] = {l: [] for l in labels}
        for fk, s in assignment.items():
            if s != split:
                continue
            for inst in by_form[fk]:
                pool[inst.label].append(inst)
        size = sizes[split]
        total = sum(len(v) for v in pool.values())
        if total < size:
            raise InfeasibleSplitError(
                f"{split} split has {total} instances available, {size} requested",
                constraint="insufficient-data",
            )
        counts = _allocate_counts(
            {l: len(v) for l, v in pool.items()}, size, cfg.max_imbalance, rng
        )
        chosen: list[ProbingInstance] = []
        for l in labels:
            chosen.extend(_shuffled(pool[l], rng)[: counts[l]])
        splits[split] = _shuffled(chosen, rng)

    ds = ProbingDataset(spec=spec, config=cfg, **splits)
    _check_probing_invariants(ds)
    return ds


def _check_probing_invariants(ds: ProbingDataset):
    seen: dict[str, str] = {}
    for split in SPLIT_NAMES:
        for inst in ds.split(split):
            fk = _form_key(inst.form)
            if seen.setdefault(fk, split) != split:
                raise AssertionError(f"form {fk!r} leaked across splits")
    for split in SPLIT_NAMES:
        counts: dict[str, int] = {l: 0 for l in ds.spec.label_set}
        for inst in ds.split(split):
            counts[inst.label] += 1
        if min(counts.values()) == 0:
            raise AssertionError(f"{split} split is missing a retained label")
        if max(counts.values()) > ds.config.max_imbalance * min(counts.values()):
            raise AssertionError(f"{split} split violates the imbalance cap")


def enumerate_tasks(
    tb: Treebank, min_per_label: int, cfg: SplitConfig | None = None
) -> list[ProbingTaskSpec]:
    """List (feature, UPOS) probing tasks this treebank can support.

    A label survives if at least ``min_per_label`` distinct target forms carry
    it; a task is emitted when >= 2 labels survive and a compliant split of
    the configured sizes is actually constructible.
    """
    cfg = cfg or SplitConfig()
    pairs: dict[tuple[str, str], dict[str, set[str]]] = {}
    for sent in tb.sentences:
        for tok in sent.tokens:
            if tok.upos is None:
                continue
            for feature, value in tok.feats.items():
                forms = pairs.setdefault((feature, tok.upos), {})
                forms.setdefault(value, set()).add(_form_key(tok.form))

    specs = []
    for (feature, upos) in sorted(pairs):
        label_forms = pairs[(feature, upos)]
        retained = sorted(
            l for l, forms in label_forms.items() if len(forms) >= min_per_label
        )
        if len(retained) < 2:
            continue
        spec = ProbingTaskSpec(
            language=tb.language, feature=feature, upos=upos, label_set=tuple(retained)
        )
        instances = extract_morph_instances(tb, feature, upos)
        try:
            sample_probing_split(instances, spec, cfg)
        except InfeasibleSplitError:
            continue
        specs.append(spec)
    return specs


def sample_tagging_split(
    sentences: list[Sentence], task: str, cfg: SplitConfig
) -> TaggingDataset:
    """Shuffle sentences by seed and allocate test/dev first, remainder to train.

    Test and dev each take ``min(configured size, floor(N/10))`` sentences, at
    least 1; train takes the remainder capped at the configured train size.
    """
    if task not in ("pos", "ner"):
        raise ValueError(f"unknown tagging task {task!r}")
    n = len(sentences)
    if n < 3:
        raise InfeasibleSplitError(
            f"{n} sentences cannot fill three splits", constraint="sentence-count"
        )
    ids = [s.id for s in sentences]
    if len(set(ids)) != n:
        raise ValueError("duplicate sentence ids in input")
    for sent in sentences:
        for tok in sent.tokens:
            tag = tok.upos if task == "pos" else tok.ner
            if tag is None:
                raise ValueError(
                    f"sentence {sent.id!r} lacks a gold {task} tag on {tok.form!r}"
                )

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    order = rng.permutation(n)
    test_n = min(cfg.test_size, max(1, n // 10))
    dev_n = min(cfg.dev_size, max(1, n // 10))
    train_n = min(cfg.train_size, n - test_n - dev_n)
    test = [sentences[i] for i in order[:test_n]]
    dev = [sentences[i] for i in order[test_n : test_n + dev_n]]
    train = [sentences[i] for i in order[test_n + dev_n : test_n + dev_n + train_n]]
    return TaggingDataset(task=task, config=cfg, train=train, dev=dev, test=test)


def strip_treebank_diacritics(tb: Treebank) -> Treebank:
    """Fold diacritics on every surface form, leaving annotations untouched."""
    sentences = []
    for sent in tb.sentences:
        tokens = [
            Token(
                form=strip_diacritics(t.form),
                lemma=t.lemma,
                upos=t.upos,
                feats=dict(t.feats),
                ner=t.ner,
            )
            for t in sent.tokens
        ]
        sentences.append(Sentence(tokens=tokens, id=sent.id))
    return Treebank(language=tb.language, sentences=sentences)


# ---------------------------------------------------------------------------
# JSON-lines serialization (the interface consumed by the embedding exporter)

def _token_record(tok: Token) -> dict:
    return {
        "form": tok.form,
        "lemma": tok.lemma,
        "upos": tok.upos,
        "feats": tok.feats,
        "ner": tok.ner,
    }


def _sentence_record(sent: Sentence) -> dict:
    return {"id": sent.id, "tokens": [_token_record(t) for t in sent.tokens]}


def _sentence_from_record(rec: dict) -> Sentence:
    tokens = [
        Token(
            form=t["form"],
            lemma=t.get("lemma"),
            upos=t.get("upos"),
            feats=t.get("feats") or {},
            ner=t.get("ner"),
        )
        for t in rec["tokens"]
    ]
    return Sentence(tokens=tokens, id=rec["id"])


def _dump_jsonl(records, path: Path):
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False, sort_keys=True))
            f.write("\n")


def _load_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def write_probing_dataset(
    ds: ProbingDataset, out_dir: str | Path, sentences: dict[str, Sentence] | None = None
):
    """Write spec.json, one JSONL file per split, and the referenced sentences.

    ``sentences`` maps sentence id to Sentence; when given, the sentences
    referenced by any instance are dumped to sentences.jsonl so the embedding
    exporter can run without the original treebank.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "language": ds.spec.language,
        "feature": ds.spec.feature,
        "upos": ds.spec.upos,
        "label_set": list(ds.spec.label_set),
        "config": asdict(ds.config),
    }
    (out / "spec.json").write_text(
        json.dumps(meta, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    for split in SPLIT_NAMES:
        _dump_jsonl(
            (
                {
                    "sentence_id": i.sentence_id,
                    "token_index": i.token_index,
                    "label": i.label,
                    "form": i.form,
                }
                for i in ds.split(split)
            ),
            out / f"{split}.jsonl",
        )
    if sentences is not None:
        referenced = sorted(
            {i.sentence_id for split in SPLIT_NAMES for i in ds.split(split)}
        )
        missing = [sid for sid in referenced if sid not in sentences]
        if missing:
            raise KeyError(f"sentences missing for ids: {missing[:5]}")
        _dump_jsonl(
            (_sentence_record(sentences[sid]) for sid in referenced),
            out / "sentences.jsonl",
        )


def read_probing_dataset(
    in_dir: str | Path,
) -> tuple[ProbingTaskSpec, SplitConfig, dict[str, list[ProbingInstance]], dict[str, Sentence]]:
    """Load a probing dataset directory written by write_probing_dataset."""
    src = Path(in_dir)
    meta = json.loads((src / "spec.json").read_text(encoding="utf-8"))
    spec = ProbingTaskSpec(
        language=meta["language"],
        feature=meta["feature"],
        upos=meta["upos"],
        label_set=tuple(meta["label_set"]),
    )
    cfg = SplitConfig(**meta["config"])
    splits = {}
    for split in SPLIT_NAMES:
        splits[split] = [
            ProbingInstance(
                sentence_id=r["sentence_id"],
                token_index=r["token_index"],
                label=r["label"],
                form=r["form"],
            )
            for r in _load_jsonl(src / f"{split}.jsonl")
        ]
    sentences = {}
    sent_file = src / "sentences.jsonl"
    if sent_file.exists():
        for rec in _load_jsonl(sent_file):
            sent = _sentence_from_record(rec)
            sentences[sent.id] = sent
    return spec, cfg, splits, sentences


def write_tagging_dataset(ds: TaggingDataset, out_dir: str | Path):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "task.json").write_text(
        json.dumps({"task": ds.task, "config": asdict(ds.config)}, sort_keys=True, indent=2)
        + "\n",
        encoding="utf-8",
    )
    for split in SPLIT_NAMES:
        _dump_jsonl(
            (_sentence_record(s) for s in ds.split(split)), out / f"{split}.jsonl"
        )


def read_tagging_dataset(in_dir: str | Path) -> TaggingDataset:
    src = Path(in_dir)
    meta = json.loads((src / "task.json").read_text(encoding="utf-8"))
    splits = {
        split: [_sentence_from_record(r) for r in _load_jsonl(src / f"{split}.jsonl")]
        for split in SPLIT_NAMES
    }
    return TaggingDataset(task=meta["task"], config=SplitConfig(**meta["config"]), **splits)
