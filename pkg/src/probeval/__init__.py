"""Evaluation toolkit for contextual language models on morphologically rich,
low-resource languages: subword tokenizer diagnostics, constrained
probing/tagging dataset sampling, and lightweight classifiers over frozen
per-layer embeddings."""

from .corpus import (
    ProbingInstance,
    Sentence,
    Token,
    Treebank,
    extract_morph_instances,
    parse_conllu,
    parse_wikiann,
    to_conllu,
)
from .embeddings import (
    EmbeddingFileHeader,
    LayerMixer,
    SentenceEmbedding,
    layer_stack,
    mix_layers,
    pool,
    read_embeddings,
    read_embeddings_file,
    write_embeddings,
    write_embeddings_file,
)
from .errors import FormatError, InfeasibleSplitError, ParseError, ProbevalError
from .metrics import SpanF1, accuracy, bio_spans, paired_t_test, span_f1
from .nn import (
    AdamW,
    MlpClassifier,
    MlpParams,
    TrainConfig,
    init_mlp,
    load_checkpoint,
    loss_and_grads,
    mlp_forward,
    save_checkpoint,
    train,
)
from .runner import (
    ExperimentConfig,
    ResultRow,
    emit_report,
    evaluate_checkpoint,
    pooling_gap,
    run_probing_experiment,
    run_tagging_experiment,
)
from .sampling import (
    ProbingDataset,
    ProbingTaskSpec,
    SplitConfig,
    TaggingDataset,
    enumerate_tasks,
    sample_probing_split,
    sample_tagging_split,
)
from .subword import (
    Segmentation,
    TokenizerStats,
    Vocabulary,
    load_vocab,
    splike_segment,
    strip_diacritics,
    tokenizer_stats,
    wordpiece_segment,
)

__version__ = "0.1.0"
