import dataclasses
import json

import numpy as np
import pytest

from probeval.nn import TrainConfig, load_checkpoint
from probeval.runner import (
    ExperimentConfig,
    ResultRow,
    emit_report,
    evaluate_checkpoint,
    markdown_pivot,
    pooling_gap,
    read_results_csv,
    results_csv,
    run_probing_experiment,
    run_tagging_experiment,
)
from tests.conftest import build_probe_fixture, build_tagging_fixture

FAST_TRAIN = dict(batch_size=16, lr=5e-3, max_epochs=30, patience=30, seed=0)


def probe_config(task_dir, emb_path, **kw):
    train = TrainConfig(**{**FAST_TRAIN, **kw.pop("train", {})})
    return ExperimentConfig(
        kind="morph-probe",
        language="xx",
        embeddings=str(emb_path),
        dataset=str(task_dir),
        train=train,
        **kw,
    )


class TestExperimentConfig:
    def test_kind_defaults(self):
        probe = ExperimentConfig(kind="morph-probe", language="fi", embeddings="e", dataset="d")
        assert (probe.pooling, probe.layers) == ("last", "mix")
        tag = ExperimentConfig(kind="pos", language="fi", embeddings="e", dataset="d")
        assert (tag.pooling, tag.layers) == ("first", "top")

    def test_fingerprint_deterministic(self):
        a = ExperimentConfig(kind="pos", language="fi", embeddings="e", dataset="d")
        b = ExperimentConfig(kind="pos", language="fi", embeddings="e", dataset="d")
        assert a.fingerprint() == b.fingerprint()

    def test_fingerprint_sensitive_to_seed_and_flags(self):
        a = ExperimentConfig(kind="pos", language="fi", embeddings="e", dataset="d")
        b = ExperimentConfig(
            kind="pos", language="fi", embeddings="e", dataset="d",
            train=TrainConfig(seed=1),
        )
        c = ExperimentConfig(
            kind="pos", language="fi", embeddings="e", dataset="d", strip_diacritics=True
        )
        assert len({a.fingerprint(), b.fingerprint(), c.fingerprint()}) == 3

    def test_json_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(
            kind="ner", language="myv", embeddings="e.ulemb", dataset="d",
            train=TrainConfig(seed=7, batch_size=64),
        )
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        again = ExperimentConfig.from_json_file(path)
        assert again == cfg

    def test_cli_overrides_beat_file(self, tmp_path):
        cfg = ExperimentConfig(kind="pos", language="fi", embeddings="e", dataset="d")
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        again = ExperimentConfig.from_json_file(path, pooling="last", train={"seed": 9})
        assert again.pooling == "last"
        assert again.train.seed == 9

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            ExperimentConfig(kind="parsing", language="fi", embeddings="e", dataset="d")


class TestProbingExperiment:
    def test_gold_leak_reaches_high_accuracy(self, tmp_path):
        task_dir, emb = build_probe_fixture(tmp_path, mode="gold")
        rows = run_probing_experiment(probe_config(task_dir, emb))
        assert len(rows) == 1
        assert rows[0].metric == "accuracy"
        assert rows[0].value >= 0.99
        assert rows[0].epochs >= 1

    def test_deterministic_rows(self, tmp_path):
        task_dir, emb = build_probe_fixture(tmp_path, mode="gold")
        cfg = probe_config(task_dir, emb)
        a = run_probing_experiment(cfg)
        b = run_probing_experiment(cfg)
        strip = lambda r: dataclasses.replace(r, timestamp="")
        assert [strip(r) for r in a] == [strip(r) for r in b]

    def test_random_embeddings_near_majority_baseline(self, tmp_path):
        task_dir, emb = build_probe_fixture(
            tmp_path, mode="random", n_labels=2, forms_per_label=300,
            sizes=(240, 60, 120), seed=5,
        )
        rows = run_probing_experiment(probe_config(task_dir, emb))
        _, _, splits, _ = __import__("probeval.sampling", fromlist=["x"]).read_probing_dataset(task_dir)
        counts = {}
        for inst in splits["test"]:
            counts[inst.label] = counts.get(inst.label, 0) + 1
        majority = max(counts.values()) / sum(counts.values())
        assert abs(rows[0].value - majority) <= 0.05

    def test_missing_sentences_listed_and_aborted(self, tmp_path):
        task_dir, emb = build_probe_fixture(tmp_path, mode="gold")
        # drop one sentence from the embedding file
        from probeval.embeddings import read_embeddings_file, write_embeddings_file

        header, sentences = read_embeddings_file(emb)
        ids = header.meta["sentence_ids"]
        kept_meta = {**header.meta, "sentence_ids": ids[:-1]}
        smaller = dataclasses.replace(
            header, sentence_count=len(ids) - 1, meta=kept_meta
        )
        write_embeddings_file(emb, sentences[:-1], smaller)
        with pytest.raises(ValueError, match="lacks 1 referenced"):
            run_probing_experiment(probe_config(task_dir, emb))

    def test_directory_of_tasks(self, tmp_path):
        import dataclasses as dc

        from probeval.embeddings import read_embeddings_file, write_embeddings_file

        root = tmp_path / "many"
        _, emb_a = build_probe_fixture(root, mode="gold", feature="Case", sid_prefix="a")
        _, emb_b = build_probe_fixture(
            root, mode="gold", n_labels=2, feature="Number", sid_prefix="b"
        )
        # one embedding file covering both tasks
        ha, sa = read_embeddings_file(emb_a)
        hb, sb = read_embeddings_file(emb_b)
        merged_ids = ha.meta["sentence_ids"] + hb.meta["sentence_ids"]
        merged = dc.replace(
            ha,
            sentence_count=len(merged_ids),
            meta={**ha.meta, "sentence_ids": merged_ids},
        )
        emb = root / "merged.ulemb"
        write_embeddings_file(emb, sa + sb, merged)
        emb_a.unlink(), emb_b.unlink()
        rows = run_probing_experiment(probe_config(root, emb))
        assert len(rows) == 2
        assert {r.task for r in rows} == {"xx_Case_NOUN", "xx_Number_NOUN"}

    def test_first_pooling_vs_last_pooling_gap(self, tmp_path):
        # label lives only on the last subword: last pooling wins
        task_dir, emb = build_probe_fixture(tmp_path, mode="gold", signal="last")
        last_rows = run_probing_experiment(probe_config(task_dir, emb, pooling="last"))
        first_rows = run_probing_experiment(probe_config(task_dir, emb, pooling="first"))
        gap = pooling_gap(last_rows, first_rows)
        assert gap > 0.3

    def test_top_layer_mode(self, tmp_path):
        task_dir, emb = build_probe_fixture(tmp_path, mode="gold")
        rows = run_probing_experiment(probe_config(task_dir, emb, layers="top"))
        assert rows[0].value >= 0.99


class TestTaggingExperiment:
    def _config(self, kind, dataset, emb, **kw):
        return ExperimentConfig(
            kind=kind,
            language="xx",
            embeddings=str(emb),
            dataset=str(dataset),
            train=TrainConfig(**{**FAST_TRAIN, **kw.pop("train", {})}),
            **kw,
        )

    def test_pos_gold_leak(self, tmp_path):
        ds, emb = build_tagging_fixture(tmp_path, task="pos", mode="gold")
        row = run_tagging_experiment(self._config("pos", ds, emb))
        assert row.metric == "accuracy"
        assert row.value >= 0.99

    def test_ner_gold_leak_span_f1(self, tmp_path):
        ds, emb = build_tagging_fixture(tmp_path, task="ner", mode="gold")
        row = run_tagging_experiment(self._config("ner", ds, emb))
        assert row.metric == "span_f1"
        assert row.value >= 0.99

    def test_pos_random_near_majority(self, tmp_path):
        ds, emb = build_tagging_fixture(
            tmp_path, task="pos", mode="random", n_sentences=800, seed=4
        )
        row = run_tagging_experiment(self._config("pos", ds, emb))
        from probeval.sampling import read_tagging_dataset

        test = read_tagging_dataset(ds).test
        tags = [t.upos for s in test for t in s.tokens]
        majority = max(tags.count(t) for t in set(tags)) / len(tags)
        assert abs(row.value - majority) <= 0.05

    def test_same_seed_identical(self, tmp_path):
        ds, emb = build_tagging_fixture(tmp_path, task="pos", mode="gold")
        cfg = self._config("pos", ds, emb)
        a = run_tagging_experiment(cfg)
        b = run_tagging_experiment(cfg)
        assert dataclasses.replace(a, timestamp="") == dataclasses.replace(b, timestamp="")

    def test_task_mismatch_rejected(self, tmp_path):
        ds, emb = build_tagging_fixture(tmp_path, task="pos", mode="gold")
        with pytest.raises(ValueError, match="task"):
            run_tagging_experiment(self._config("ner", ds, emb))


class TestCheckpointEvaluation:
    def test_saved_probe_reproduces_test_metric(self, tmp_path):
        task_dir, emb = build_probe_fixture(tmp_path, mode="gold")
        cfg = probe_config(task_dir, emb)
        rows = run_probing_experiment(cfg, save_dir=tmp_path / "models")
        ckpts = sorted((tmp_path / "models").glob("*.ckpt"))
        assert len(ckpts) == 1
        clf = load_checkpoint(ckpts[0])
        metric, value = evaluate_checkpoint(clf, task_dir, emb, split="test", pooling="last")
        assert metric == "accuracy"
        assert value == pytest.approx(rows[0].value, abs=1e-9)

    def test_saved_tagger_reproduces_metric(self, tmp_path):
        ds, emb = build_tagging_fixture(tmp_path, task="ner", mode="gold")
        cfg = ExperimentConfig(
            kind="ner", language="xx", embeddings=str(emb), dataset=str(ds),
            train=TrainConfig(**FAST_TRAIN),
        )
        row = run_tagging_experiment(cfg, save_path=tmp_path / "tagger.ckpt")
        clf = load_checkpoint(tmp_path / "tagger.ckpt")
        metric, value = evaluate_checkpoint(clf, ds, emb, split="test")
        assert metric == "span_f1"
        assert value == pytest.approx(row.value, abs=1e-9)


def make_rows(n, metric="accuracy"):
    return [
        ResultRow(
            fingerprint=f"f{i % 2}",
            task=f"task{i}",
            language=["et", "fi"][i % 2],
            model=["mbert", "xlmr"][i // 2 % 2],
            metric=metric,
            value=0.5 + 0.01 * i,
            epochs=3,
            timestamp="2026-01-01T00:00:00+00:00",
        )
        for i in range(n)
    ]


class TestReporting:
    def test_empty_rows_header_only(self):
        csv_text, _ = emit_report([])
        assert csv_text.splitlines() == [
            "fingerprint,task,language,model,metric,value,epochs,timestamp"
        ]

    def test_two_rows_three_lines(self):
        csv_text, _ = emit_report(make_rows(2))
        assert len(csv_text.splitlines()) == 3

    def test_pivot_cell_count(self):
        rows = make_rows(8)
        md = markdown_pivot(rows)
        langs = {r.language for r in rows}
        models = {r.model for r in rows}
        body = md.splitlines()[2:]
        assert len(body) == len(langs)
        for line in body:
            assert line.count("|") == len(models) + 2

    def test_rows_sorted_by_fingerprint(self):
        rows = list(reversed(make_rows(4)))
        csv_text, _ = emit_report(rows)
        data_lines = csv_text.splitlines()[1:]
        keys = [tuple(l.split(",")[:2]) for l in data_lines]
        assert keys == sorted(keys)

    def test_csv_roundtrip_exact_values(self, tmp_path):
        rows = make_rows(4)
        path = tmp_path / "r.csv"
        path.write_text(results_csv(rows), encoding="utf-8")
        again = read_results_csv(path)
        assert again == sorted(rows, key=ResultRow.key)

    def test_pooling_gap_requires_same_tasks(self):
        a = make_rows(2)
        b = make_rows(3)
        with pytest.raises(ValueError, match="task sets"):
            pooling_gap(a, b)

    def test_pooling_gap_mean(self):
        a = make_rows(2)
        b = [dataclasses.replace(r, value=r.value - 0.1) for r in a]
        assert pooling_gap(a, b) == pytest.approx(0.1)
