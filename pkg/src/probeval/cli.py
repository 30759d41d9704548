"""Command-line interface.

Subcommands: stats, sample, train-probe, train-tagger, eval, ttest, report.
Exit codes: 0 success, 2 infeasible dataset, 3 format/parse error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import embeddings as emb
from . import runner, sampling, subword
from .corpus import extract_morph_instances, parse_conllu, parse_wikiann
from .errors import FormatError, InfeasibleSplitError, ParseError
from .metrics import paired_t_test
from .nn import load_checkpoint

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_FORMAT = 3


def _read_types(args) -> list[str]:
    types: list[str] = []
    seen = set()

    def add(word: str):
        if word and word not in seen:
            seen.add(word)
            types.append(word)

    if args.types:
        for line in Path(args.types).read_text(encoding="utf-8").splitlines():
            add(line.strip())
    if args.conllu:
        tb = parse_conllu(Path(args.conllu).read_text(encoding="utf-8"))
        for sent in tb.sentences:
            for tok in sent.tokens:
                add(tok.form)
    if not types:
        raise ParseError("no word types found; pass --types and/or --conllu")
    if args.strip_diacritics:
        folded = []
        seen.clear()
        for w in types:
            f = subword.strip_diacritics(w)
            if f and f not in seen:
                seen.add(f)
                folded.append(f)
        types = folded
    return types


def _cmd_stats(args) -> int:
    kind = subword.WORDPIECE if args.tokenizer == "wordpiece" else subword.SENTENCEPIECE
    types = _read_types(args)
    rows = {}
    sizes = {}
    for vocab_path in args.vocab:
        vocab = subword.load_vocab(vocab_path, kind=kind)
        label = args.label or Path(vocab_path).stem
        if len(args.vocab) > 1:
            label = Path(vocab_path).stem
        rows[label] = subword.tokenizer_stats(vocab, types)
        sizes[label] = len(vocab)
    text = subword.stats_csv(rows, sizes)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _split_config(args) -> sampling.SplitConfig:
    return sampling.SplitConfig(
        train_size=args.train_size,
        dev_size=args.dev_size,
        test_size=args.test_size,
        max_imbalance=args.max_imbalance,
        seed=args.seed,
    )


def _cmd_sample(args) -> int:
    cfg = _split_config(args)
    out = Path(args.output)
    if args.task == "ner":
        if not args.wikiann:
            raise ParseError("--task ner needs --wikiann input")
        tb = parse_wikiann(
            Path(args.wikiann).read_text(encoding="utf-8"),
            language=args.language,
            source=Path(args.wikiann).name,
        )
    else:
        if not args.conllu:
            raise ParseError(f"--task {args.task} needs --conllu input")
        tb = parse_conllu(
            Path(args.conllu).read_text(encoding="utf-8"),
            language=args.language,
            source=Path(args.conllu).name,
        )
    if args.strip_diacritics:
        tb = sampling.strip_treebank_diacritics(tb)

    if args.task in ("pos", "ner"):
        ds = sampling.sample_tagging_split(tb.sentences, args.task, cfg)
        sampling.write_tagging_dataset(ds, out)
        print(
            f"wrote {args.task} dataset to {out} "
            f"(train {len(ds.train)}, dev {len(ds.dev)}, test {len(ds.test)})"
        )
        return EXIT_OK

    sent_map = {s.id: s for s in tb.sentences}
    if args.all_tasks:
        specs = sampling.enumerate_tasks(tb, min_per_label=args.min_per_label, cfg=cfg)
        if not specs:
            raise InfeasibleSplitError(
                "no viable probing task in this treebank", constraint="task-enumeration"
            )
        for spec in specs:
            instances = extract_morph_instances(tb, spec.feature, spec.upos)
            ds = sampling.sample_probing_split(instances, spec, cfg)
            sampling.write_probing_dataset(ds, out / spec.name, sentences=sent_map)
            print(f"wrote {spec.name} ({len(spec.label_set)} labels)")
        return EXIT_OK

    if not (args.feature and args.upos):
        raise ParseError("--task morph needs --feature and --upos (or --all-tasks)")
    instances = extract_morph_instances(tb, args.feature, args.upos)
    label_forms: dict[str, set[str]] = {}
    for inst in instances:
        label_forms.setdefault(inst.label, set()).add(inst.form.casefold())
    labels = sorted(
        l for l, forms in label_forms.items() if len(forms) >= args.min_per_label
    )
    if len(labels) < 2:
        raise InfeasibleSplitError(
            f"{args.feature}/{args.upos} keeps {len(labels)} label(s) with "
            f">= {args.min_per_label} distinct forms",
            constraint="label-filtering",
        )
    spec = sampling.ProbingTaskSpec(
        language=args.language,
        feature=args.feature,
        upos=args.upos,
        label_set=tuple(labels),
    )
    ds = sampling.sample_probing_split(instances, spec, cfg)
    sampling.write_probing_dataset(ds, out, sentences=sent_map)
    print(f"wrote {spec.name} to {out} (labels: {', '.join(labels)})")
    return EXIT_OK


def _experiment_config(args, kind: str) -> runner.ExperimentConfig:
    overrides = {
        "kind": kind,
        "language": args.language,
        "embeddings": args.embeddings,
        "dataset": args.dataset,
        "pooling": args.pool,
        "layers": args.layers,
        "strip_diacritics": args.strip_diacritics or None,
    }
    train_overrides = {}
    if args.seed is not None:
        train_overrides["seed"] = args.seed
    if args.config:
        cfg = runner.ExperimentConfig.from_json_file(
            args.config, train=train_overrides, **overrides
        )
    else:
        required = [k for k in ("language", "embeddings", "dataset") if not overrides[k]]
        if required:
            raise ParseError(f"missing required flags without --config: {required}")
        cfg = runner.ExperimentConfig.from_dict(
            {
                **{k: v for k, v in overrides.items() if v is not None},
                "strip_diacritics": bool(args.strip_diacritics),
                "train": train_overrides,
            }
        )
    return cfg


def _write_rows(rows, output):
    text = runner.results_csv(rows)
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_train_probe(args) -> int:
    cfg = _experiment_config(args, runner.MORPH_PROBE)
    rows = runner.run_probing_experiment(cfg, save_dir=args.save_model)
    _write_rows(rows, args.output)
    return EXIT_OK


def _cmd_train_tagger(args) -> int:
    cfg = _experiment_config(args, args.task)
    row = runner.run_tagging_experiment(cfg, save_path=args.save_model)
    _write_rows([row], args.output)
    return EXIT_OK


def _cmd_eval(args) -> int:
    clf = load_checkpoint(args.model)
    metric, value = runner.evaluate_checkpoint(
        clf, args.dataset, args.embeddings, split=args.split, pooling=args.pool
    )
    print(f"{metric}={value:.6f}")
    return EXIT_OK


def _cmd_ttest(args) -> int:
    rows_a = runner.read_results_csv(args.results_a)
    rows_b = runner.read_results_csv(args.results_b)
    a = {r.task: r.value for r in rows_a}
    b = {r.task: r.value for r in rows_b}
    common = sorted(set(a) & set(b))
    if set(a) != set(b):
        print(
            f"warning: pairing on the {len(common)} shared tasks "
            f"({len(a)} vs {len(b)} rows)",
            file=sys.stderr,
        )
    t, p = paired_t_test([a[k] for k in common], [b[k] for k in common])
    print(f"n={len(common)} t={t:.6f} p={p:.6f}")
    return EXIT_OK


def _cmd_report(args) -> int:
    rows = []
    for path in args.results:
        rows.extend(runner.read_results_csv(path))
    csv_text, md_text = runner.emit_report(rows)
    if args.output:
        base = Path(args.output)
        base.with_suffix(".csv").write_text(csv_text, encoding="utf-8")
        base.with_suffix(".md").write_text(md_text, encoding="utf-8")
        print(f"wrote {base.with_suffix('.csv')} and {base.with_suffix('.md')}")
    else:
        sys.stdout.write(md_text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probeval",
        description="Tokenizer diagnostics, constrained dataset sampling, and "
        "classifiers over frozen contextual embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="tokenizer diagnostics over word types")
    p.add_argument("--vocab", action="append", required=True, help="vocabulary file")
    p.add_argument("--tokenizer", choices=["wordpiece", "sp"], default="wordpiece")
    p.add_argument("--types", help="file with one word type per line")
    p.add_argument("--conllu", help="treebank to extract word types from")
    p.add_argument("--strip-diacritics", action="store_true")
    p.add_argument("--label", help="row label (defaults to the vocab file stem)")
    p.add_argument("-o", "--output", help="output CSV path (default stdout)")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("sample", help="generate probing/tagging datasets")
    p.add_argument("--task", choices=["morph", "pos", "ner"], required=True)
    p.add_argument("--conllu", help="CoNLL-U input file")
    p.add_argument("--wikiann", help="WikiAnn 2-column input file")
    p.add_argument("--language", required=True)
    p.add_argument("--feature", help="UD feature for a single morph task")
    p.add_argument("--upos", help="UD POS tag for a single morph task")
    p.add_argument("--all-tasks", action="store_true", help="enumerate viable morph tasks")
    p.add_argument("--min-per-label", type=int, default=3)
    p.add_argument("--train-size", type=int, default=2000)
    p.add_argument("--dev-size", type=int, default=200)
    p.add_argument("--test-size", type=int, default=200)
    p.add_argument("--max-imbalance", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strip-diacritics", action="store_true")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=_cmd_sample)

    for name, func, extra in (
        ("train-probe", _cmd_train_probe, False),
        ("train-tagger", _cmd_train_tagger, True),
    ):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} on frozen embeddings")
        if extra:
            p.add_argument("--task", choices=["pos", "ner"], required=True)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--language")
        p.add_argument("--embeddings", help="ULEMB01 embedding file")
        p.add_argument("--dataset", help="dataset directory")
        p.add_argument("--pool", choices=[emb.FIRST, emb.LAST], default=None)
        p.add_argument("--layers", choices=[emb.MIX, emb.TOP], default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--strip-diacritics", action="store_true")
        p.add_argument("--save-model", help="checkpoint output (dir for probes)")
        p.add_argument("-o", "--output", help="results CSV path (default stdout)")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint on a dataset")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--split", choices=list(sampling.SPLIT_NAMES), default="test")
    p.add_argument("--pool", choices=[emb.FIRST, emb.LAST], default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ttest", help="paired t-test over two results CSVs")
    p.add_argument("results_a")
    p.add_argument("results_b")
    p.set_defaults(func=_cmd_ttest)

    p = sub.add_parser("report", help="merge results CSVs into CSV + markdown")
    p.add_argument("results", nargs="+")
    p.add_argument("-o", "--output", help="output path prefix")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleSplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ParseError, FormatError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
