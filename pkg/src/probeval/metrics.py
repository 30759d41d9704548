"""Evaluation metrics: accuracy, exact-span micro F1, and paired t-tests.

Span extraction follows the conlleval convention: an ``I-X`` that opens a
span (after ``O``, start of sentence, or a different type) is repaired to
``B-X`` rather than rejected, since tag sequences predicted token-by-token
and noisy corpora both produce such openings.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

_BIO_RE = re.compile(r"^(?:O|[BI]-[A-Z]+)$")


def accuracy(preds, golds) -> float:
    """Exact-match fraction."""
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions, {len(golds)} golds")
    if not golds:
        raise ValueError("empty inputs")
    return sum(p == g for p, g in zip(preds, golds)) / len(golds)


def bio_spans(tags: list[str]) -> set[tuple[str, int, int]]:
    """Extract (type, start, end) spans, half-open, repairing I-X openings."""
    spans = set()
    cur_type = None
    cur_start = 0
    for i, tag in enumerate(tags):
        if not _BIO_RE.match(tag):
            raise ValueError(f"tag {tag!r} outside the BIO grammar")
        if tag == "O":
            if cur_type is not None:
                spans.add((cur_type, cur_start, i))
                cur_type = None
            continue
        prefix, ent_type = tag[0], tag[2:]
        starts = prefix == "B" or ent_type != cur_type
        if starts:
            if cur_type is not None:
                spans.add((cur_type, cur_start, i))
            cur_type, cur_start = ent_type, i
    if cur_type is not None:
        spans.add((cur_type, cur_start, len(tags)))
    return spans


@dataclass(frozen=True)
class TypeScore:
    precision: float
    recall: float
    f1: float
    gold: int
    predicted: int
    correct: int


@dataclass(frozen=True)
class SpanF1:
    precision: float
    recall: float
    f1: float
    per_type: dict[str, TypeScore] = field(default_factory=dict)


def _prf(correct: int, predicted: int, gold: int) -> tuple[float, float, float]:
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def span_f1(pred_tags: list[list[str]], gold_tags: list[list[str]]) -> SpanF1:
    """Micro-averaged exact-boundary, exact-type span F1 over sentences."""
    if len(pred_tags) != len(gold_tags):
        raise ValueError(
            f"sentence count mismatch: {len(pred_tags)} vs {len(gold_tags)}"
        )
    counts: dict[str, list[int]] = {}  # type -> [correct, predicted, gold]
    for i, (pred, gold) in enumerate(zip(pred_tags, gold_tags)):
        if len(pred) != len(gold):
            raise ValueError(
                f"sentence {i}: {len(pred)} predicted tags, {len(gold)} gold"
            )
        pred_spans = bio_spans(list(pred))
        gold_spans = bio_spans(list(gold))
        for span in pred_spans:
            c = counts.setdefault(span[0], [0, 0, 0])
            c[1] += 1
            if span in gold_spans:
                c[0] += 1
        for span in gold_spans:
            counts.setdefault(span[0], [0, 0, 0])[2] += 1
    total_correct = sum(c[0] for c in counts.values())
    total_pred = sum(c[1] for c in counts.values())
    total_gold = sum(c[2] for c in counts.values())
    p, r, f = _prf(total_correct, total_pred, total_gold)
    per_type = {}
    for ent_type, (correct, predicted, gold) in sorted(counts.items()):
        tp, tr, tf = _prf(correct, predicted, gold)
        per_type[ent_type] = TypeScore(
            precision=tp, recall=tr, f1=tf, gold=gold, predicted=predicted, correct=correct
        )
    return SpanF1(precision=p, recall=r, f1=f, per_type=per_type)


# ---------------------------------------------------------------------------
# Paired t-test.  The two-tailed p-value comes from the Student t CDF via the
# regularized incomplete beta function, evaluated with the standard continued
# fraction (Lentz's method), so no external numerics are needed.

def _betacf(a: float, b: float, x: float) -> float:
    max_iter = 300
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: int) -> float:
    """Two-tailed tail mass P(|T| >= |t|) for Student's t with df degrees."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def paired_t_test(a: list[float], b: list[float]) -> tuple[float, float]:
    """Paired two-tailed t-test; returns (t statistic, p-value).

    The pairing is positional (one score per task).  If every difference is
    identical, t is undefined unless the shared difference is zero, in which
    case (0, 1) is returned.
    """
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError("need at least 2 paired observations")
    diffs = [float(x) - float(y) for x, y in zip(a, b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        raise ValueError(
            "all differences are identical and nonzero: t is undefined"
        )
    t = mean / math.sqrt(var / n)
    return t, student_t_sf2(t, n - 1)
