"""Full-pipeline contract check: dataset files -> exporter -> experiment runner."""

import numpy as np

from embexport.export import ExportJob, export_embeddings

from probeval.corpus import Sentence, Token, Treebank
from probeval.nn import TrainConfig
from probeval.runner import ExperimentConfig, run_probing_experiment
from probeval.sampling import (
    ProbingTaskSpec,
    SplitConfig,
    sample_probing_split,
    write_probing_dataset,
)
from probeval.corpus import extract_morph_instances


def build_treebank(rng, n_per_label=40):
    # word shapes correlate with case so even a random encoder's orthographic
    # signal is in play; labels: Ine ("...ssa"), Nom (bare)
    sentences = []
    i = 0
    for label, suffix in (("Ine", "ssa"), ("Nom", "")):
        for k in range(n_per_label):
            stem = "".join(rng.choice(list("klmt")) + rng.choice(list("aeio")) for _ in range(2))
            form = stem + suffix
            sentences.append(
                Sentence(
                    tokens=[
                        Token(form="on", upos="AUX"),
                        Token(form=form, upos="NOUN", feats={"Case": label}),
                        Token(form=".", upos="PUNCT"),
                    ],
                    id=f"pl:{i}",
                )
            )
            i += 1
    return Treebank(language="fi", sentences=sentences)


def test_sample_export_train_roundtrip(tiny_model_dir, tmp_path):
    rng = np.random.default_rng(0)
    tb = build_treebank(rng)
    instances = extract_morph_instances(tb, "Case", "NOUN")
    spec = ProbingTaskSpec(
        language="fi", feature="Case", upos="NOUN", label_set=("Ine", "Nom")
    )
    cfg = SplitConfig(train_size=40, dev_size=8, test_size=8, seed=0)
    ds = sample_probing_split(instances, spec, cfg)
    task_dir = tmp_path / spec.name
    write_probing_dataset(ds, task_dir, sentences={s.id: s for s in tb.sentences})

    out = tmp_path / "frozen.ulemb"
    export_embeddings(
        ExportJob(
            model_id=tiny_model_dir,
            input_path=task_dir / "sentences.jsonl",
            output_path=out,
            language="fi",
        )
    )

    rows = run_probing_experiment(
        ExperimentConfig(
            kind="morph-probe",
            language="fi",
            embeddings=str(out),
            dataset=str(task_dir),
            train=TrainConfig(batch_size=16, lr=5e-3, max_epochs=15, patience=15, seed=0),
        )
    )
    assert len(rows) == 1
    assert rows[0].metric == "accuracy"
    assert 0.0 <= rows[0].value <= 1.0
    assert rows[0].model == tiny_model_dir
