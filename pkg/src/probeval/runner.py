"""Experiment orchestration: train/evaluate probes and taggers from a config.

Every metric is a pure function of (datasets, embedding file, config): RNG
seeds live in the config, training is single-threaded, and rows are sorted by
fingerprint before emission, so reruns reproduce results exactly (timestamps
aside).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import embeddings as emb
from .metrics import accuracy, span_f1
from .nn import MlpClassifier, TrainConfig
from .sampling import SPLIT_NAMES, read_probing_dataset, read_tagging_dataset

MORPH_PROBE = "morph-probe"
POS = "pos"
NER = "ner"

_KIND_DEFAULTS = {
    # Morphology probes read the last subword and mix all layers; sequence
    # taggers read the first subword of each token at the top layer.
    MORPH_PROBE: (emb.LAST, emb.MIX),
    POS: (emb.FIRST, emb.TOP),
    NER: (emb.FIRST, emb.TOP),
}


@dataclass
class ExperimentConfig:
    kind: str
    language: str
    embeddings: str
    dataset: str
    pooling: str | None = None
    layers: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    strip_diacritics: bool = False

    def __post_init__(self):
        if self.kind not in _KIND_DEFAULTS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        default_pool, default_layers = _KIND_DEFAULTS[self.kind]
        if self.pooling is None:
            self.pooling = default_pool
        if self.layers is None:
            self.layers = default_layers
        if self.pooling not in (emb.FIRST, emb.LAST):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.layers not in (emb.MIX, emb.TOP):
            raise ValueError(f"unknown layer mode {self.layers!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        train = data.pop("train", {})
        return cls(train=TrainConfig(**train), **data)

    @classmethod
    def from_json_file(cls, path, **overrides) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        train = data.pop("train", {})
        train.update(overrides.pop("train", {}))
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict({**data, "train": train})


@dataclass(frozen=True)
class ResultRow:
    fingerprint: str
    task: str
    language: str
    model: str
    metric: str
    value: float
    epochs: int
    timestamp: str

    def key(self):
        return (self.fingerprint, self.task)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_embedding_index(path):
    header, sentences = emb.read_embeddings_file(path)
    index = emb.sentence_index(header)
    return header, sentences, index


def _require_sentences(needed: list[str], index: dict[str, int], path):
    missing = sorted(set(needed) - set(index))
    if missing:
        shown = ", ".join(missing[:10])
        more = "" if len(missing) <= 10 else f" (and {len(missing) - 10} more)"
        raise ValueError(
            f"embedding file {path} lacks {len(missing)} referenced "
            f"sentences: {shown}{more}"
        )


def _classifier(cfg: ExperimentConfig) -> MlpClassifier:
    t = cfg.train
    return MlpClassifier(
        mix_layers=cfg.layers == emb.MIX,
        batch_size=t.batch_size,
        dropout=t.dropout,
        lr=t.lr,
        beta1=t.beta1,
        beta2=t.beta2,
        eps=t.eps,
        weight_decay=t.weight_decay,
        patience=t.patience,
        max_epochs=t.max_epochs,
        seed=t.seed,
    )


def probing_task_dirs(dataset_path) -> list[Path]:
    """A dataset path is one task directory or a directory of task directories."""
    root = Path(dataset_path)
    if (root / "spec.json").exists():
        return [root]
    dirs = sorted(d for d in root.iterdir() if (d / "spec.json").exists())
    if not dirs:
        raise ValueError(f"no probing task (spec.json) found under {root}")
    return dirs


def _probe_features(splits, sentences, index, cfg):
    """Instances -> (X, y) arrays per split, honoring pooling and layer mode."""
    out = {}
    for split, instances in splits.items():
        rows = []
        labels = []
        for inst in instances:
            se = sentences[index[inst.sentence_id]]
            if cfg.layers == emb.MIX:
                rows.append(emb.layer_stack(se, inst.token_index, cfg.pooling))
            else:
                rows.append(emb.pool(se, inst.token_index, cfg.pooling, layer=emb.TOP))
            labels.append(inst.label)
        out[split] = (np.asarray(rows, dtype=np.float64), labels)
    return out


def run_probing_experiment(
    cfg: ExperimentConfig, save_dir=None
) -> list[ResultRow]:
    """Train and evaluate one probe per task directory; one row per task."""
    if cfg.kind != MORPH_PROBE:
        raise ValueError(f"probing runner got kind {cfg.kind!r}")
    header, sentences, index = _load_embedding_index(cfg.embeddings)
    model_id = str(header.meta.get("model", "unknown"))
    fingerprint = cfg.fingerprint()
    rows = []
    for task_dir in probing_task_dirs(cfg.dataset):
        spec, _, splits, _ = read_probing_dataset(task_dir)
        needed = [i.sentence_id for s in SPLIT_NAMES for i in splits[s]]
        _require_sentences(needed, index, cfg.embeddings)
        feats = _probe_features(splits, sentences, index, cfg)
        clf = _classifier(cfg)
        clf.fit(*feats["train"], dev_X=feats["dev"][0], dev_y=feats["dev"][1])
        if save_dir is not None:
            Path(save_dir).mkdir(parents=True, exist_ok=True)
            clf.save(Path(save_dir) / f"{spec.name}.ckpt")
        preds = clf.predict(feats["test"][0])
        acc = accuracy(list(preds), feats["test"][1])
        rows.append(
            ResultRow(
                fingerprint=fingerprint,
                task=spec.name,
                language=cfg.language,
                model=model_id,
                metric="accuracy",
                value=acc,
                epochs=clf.epochs_trained_,
                timestamp=_now(),
            )
        )
    return sorted(rows, key=ResultRow.key)


def _tagging_features(split_sentences, sentences, index, cfg, task):
    xs, ys, lengths = [], [], []
    for sent in split_sentences:
        se = sentences[index[sent.id]]
        if se.word_count != len(sent.tokens):
            raise ValueError(
                f"sentence {sent.id!r}: embedding has {se.word_count} words, "
                f"dataset has {len(sent.tokens)} tokens"
            )
        for i, tok in enumerate(sent.tokens):
            if cfg.layers == emb.MIX:
                xs.append(emb.layer_stack(se, i, cfg.pooling))
            else:
                xs.append(emb.pool(se, i, cfg.pooling, layer=emb.TOP))
            ys.append(tok.upos if task == POS else tok.ner)
        lengths.append(len(sent.tokens))
    return np.asarray(xs, dtype=np.float64), ys, lengths


def run_tagging_experiment(cfg: ExperimentConfig, save_path=None) -> ResultRow:
    """Train a shared per-token classifier; token accuracy (POS) or span F1 (NER).

    The tag inventory comes from the train split; test tokens with tags
    outside it can never be predicted and therefore count as errors.
    """
    if cfg.kind not in (POS, NER):
        raise ValueError(f"tagging runner got kind {cfg.kind!r}")
    header, sentences, index = _load_embedding_index(cfg.embeddings)
    model_id = str(header.meta.get("model", "unknown"))
    ds = read_tagging_dataset(cfg.dataset)
    if ds.task != cfg.kind:
        raise ValueError(f"dataset is for task {ds.task!r}, config wants {cfg.kind!r}")
    needed = [s.id for name in SPLIT_NAMES for s in ds.split(name)]
    _require_sentences(needed, index, cfg.embeddings)

    feats = {
        name: _tagging_features(ds.split(name), sentences, index, cfg, cfg.kind)
        for name in SPLIT_NAMES
    }
    clf = _classifier(cfg)
    clf.fit(
        feats["train"][0],
        feats["train"][1],
        dev_X=feats["dev"][0],
        dev_y=feats["dev"][1],
    )
    if save_path is not None:
        clf.save(save_path)
    test_x, test_y, test_lengths = feats["test"]
    preds = list(clf.predict(test_x))
    if cfg.kind == POS:
        metric, value = "accuracy", accuracy(preds, test_y)
    else:
        pred_seqs, gold_seqs = [], []
        pos = 0
        for n in test_lengths:
            pred_seqs.append(preds[pos : pos + n])
            gold_seqs.append(test_y[pos : pos + n])
            pos += n
        metric, value = "span_f1", span_f1(pred_seqs, gold_seqs).f1
    return ResultRow(
        fingerprint=cfg.fingerprint(),
        task=f"{cfg.language}_{cfg.kind}",
        language=cfg.language,
        model=model_id,
        metric=metric,
        value=value,
        epochs=clf.epochs_trained_,
        timestamp=_now(),
    )


def evaluate_checkpoint(
    clf,
    dataset_path,
    embeddings_path,
    split: str = "test",
    pooling: str | None = None,
) -> tuple[str, float]:
    """Score a trained classifier on one split of a dataset directory.

    Returns (metric name, value).  The layer mode follows the checkpoint's
    ``mix_layers``; pooling defaults to last-subword for probing datasets and
    first-subword for tagging datasets.
    """
    if split not in SPLIT_NAMES:
        raise ValueError(f"unknown split {split!r}")
    header, sentences = emb.read_embeddings_file(embeddings_path)
    index = emb.sentence_index(header)
    layers = emb.MIX if clf.mix_layers else emb.TOP
    root = Path(dataset_path)

    if (root / "spec.json").exists():
        pooling = pooling or emb.LAST
        spec, _, splits, _ = read_probing_dataset(root)
        cfg = _FeatureView(pooling=pooling, layers=layers)
        _require_sentences([i.sentence_id for i in splits[split]], index, embeddings_path)
        feats = _probe_features({split: splits[split]}, sentences, index, cfg)
        preds = clf.predict(feats[split][0])
        return "accuracy", accuracy(list(preds), feats[split][1])

    if (root / "task.json").exists():
        pooling = pooling or emb.FIRST
        ds = read_tagging_dataset(root)
        cfg = _FeatureView(pooling=pooling, layers=layers)
        _require_sentences([s.id for s in ds.split(split)], index, embeddings_path)
        x, y, lengths = _tagging_features(ds.split(split), sentences, index, cfg, ds.task)
        preds = list(clf.predict(x))
        if ds.task == POS:
            return "accuracy", accuracy(preds, y)
        pred_seqs, gold_seqs = [], []
        pos = 0
        for n in lengths:
            pred_seqs.append(preds[pos : pos + n])
            gold_seqs.append(y[pos : pos + n])
            pos += n
        return "span_f1", span_f1(pred_seqs, gold_seqs).f1

    raise ValueError(f"{root} holds neither spec.json nor task.json")


@dataclass(frozen=True)
class _FeatureView:
    """The two config fields feature extraction actually needs."""

    pooling: str
    layers: str


# ---------------------------------------------------------------------------
# Reporting

_CSV_FIELDS = [
    "fingerprint",
    "task",
    "language",
    "model",
    "metric",
    "value",
    "epochs",
    "timestamp",
]


def results_csv(rows: list[ResultRow]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=_CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in sorted(rows, key=ResultRow.key):
        rec = asdict(row)
        rec["value"] = repr(row.value)
        writer.writerow(rec)
    return out.getvalue()


def read_results_csv(path) -> list[ResultRow]:
    with open(path, encoding="utf-8", newline="") as f:
        return [
            ResultRow(
                fingerprint=r["fingerprint"],
                task=r["task"],
                language=r["language"],
                model=r["model"],
                metric=r["metric"],
                value=float(r["value"]),
                epochs=int(r["epochs"]),
                timestamp=r["timestamp"],
            )
            for r in csv.DictReader(f)
        ]


def markdown_pivot(rows: list[ResultRow]) -> str:
    """Language x model table of mean metric values."""
    languages = sorted({r.language for r in rows})
    models = sorted({r.model for r in rows})
    cells: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        cells.setdefault((r.language, r.model), []).append(r.value)
    lines = ["| language | " + " | ".join(models) + " |"]
    lines.append("| --- | " + " | ".join("---" for _ in models) + " |")
    for lang in languages:
        row = [lang]
        for model in models:
            vals = cells.get((lang, model))
            row.append(f"{sum(vals) / len(vals):.4f}" if vals else "")
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def emit_report(rows: list[ResultRow]) -> tuple[str, str]:
    """Render (CSV, markdown pivot) for a set of result rows."""
    return results_csv(rows), markdown_pivot(rows)


def pooling_gap(last_rows: list[ResultRow], first_rows: list[ResultRow]) -> float:
    """Mean over tasks of (last-subword value - first-subword value)."""
    last = {r.task: r.value for r in last_rows}
    first = {r.task: r.value for r in first_rows}
    if set(last) != set(first):
        raise ValueError("task sets differ between the two runs")
    if not last:
        raise ValueError("no tasks to compare")
    return sum(last[t] - first[t] for t in last) / len(last)
