"""Training, inference, and evaluation.

Training draws a (positive, negative) paragraph pair per example and
minimizes -(log q+ + log p+), where q+ is the positive paragraph's share of
the pair-normalized quality softmax and p+ aggregates the span probabilities
at the weakly labeled answer locations.  Batches average example losses into
one Adadelta step.

Inference runs a start/end beam per paragraph, groups candidate spans by
normalized answer text, aggregates within each paragraph, and mixes across
paragraphs with the quality weights:  S(A) = sum_i q_i * p_i(A).  The best
answer is the argmax of S (ties go to the lexicographically smaller string).

Metrics are exact match, bag-of-token F1 (both after answer normalization:
lowercase, strip punctuation and articles, collapse whitespace), and mean
average precision of the quality ranking against contains-answer labels.
"""

import re
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .aggregation import AggregationMode, aggregate, group_candidates
from .corpus import label_spans
from .diffmath import backward, clip_min, log, no_grad, pick
from .diffmath.rng import STREAM_PREDICT, STREAM_TRAIN, make_rng
from .paragraph_quality import (
    normalize_qualities,
    normalize_quality_tensors,
    quality_logit,
    sample_pair,
)
from .span_decoder import (
    SpanCandidate,
    end_distribution,
    span_probability,
    start_distribution,
)

PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 10
    mode: str = "max"
    k1: int = 3
    k2: int = 1
    seed: int = 0
    lr: float = 1.0
    rho: float = 0.95
    eps: float = 1e-6
    threads: int = 1
    span_table_cap: int = 64

    def __post_init__(self):
        if self.k1 < 1 or self.k2 < 1:
            raise ValueError(f"beam sizes must be >= 1, got k1={self.k1}, k2={self.k2}")
        for name in ("epochs", "batch_size", "threads", "span_table_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def aggregation_mode(self) -> AggregationMode:
        return AggregationMode.parse(self.mode)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float | None
    skipped: int
    steps: int


@dataclass
class Prediction:
    example_id: str
    best_answer: str
    answer_scores: dict
    paragraph_probs: list
    paragraph_groups: list  # per paragraph: the AnswerGroups it contributed


# ----------------------------------------------------------------- training


def paragraph_label_table(dataset):
    """labels[example][paragraph] -> list of SpanLabel, computed once."""
    return [[label_spans(p, ex.answers) for p in ex.paragraphs] for ex in dataset]


def example_loss(model, example, pos_index, pos_labels, neg_paragraph, mode, rng):
    """-(log q+ + log p+) for one training pair, as a graph scalar.

    p+ aggregates span probabilities at the labeled locations; end
    distributions are computed once per distinct labeled start.  Both
    probabilities are floored at PROB_FLOOR before the log so early
    zero-mass labels cannot produce infinities.
    """
    positive = example.paragraphs[pos_index]
    ctx = model.encode_paragraph(example.question, positive.tokens, rng, training=True)
    starts = start_distribution(ctx, model.decoder)
    ends_by_start = {}
    span_probs = []
    for label in pos_labels:
        if label.start not in ends_by_start:
            ends_by_start[label.start] = end_distribution(ctx, starts, label.start, model.decoder)
        span_probs.append(span_probability(starts, ends_by_start[label.start], label.start, label.end))
    answer_prob = aggregate(span_probs, mode, rng)

    q_pos = quality_logit(ctx, starts, model.quality, model.grad_through_start)
    ctx_neg = model.encode_paragraph(example.question, neg_paragraph.tokens, rng, training=True)
    starts_neg = start_distribution(ctx_neg, model.decoder)
    q_neg = quality_logit(ctx_neg, starts_neg, model.quality, model.grad_through_start)
    pair_probs = normalize_quality_tensors([q_pos, q_neg])

    loss = -(log(clip_min(pick(pair_probs, 0), PROB_FLOOR)) + log(clip_min(answer_prob, PROB_FLOOR)))
    if not np.isfinite(loss.data):
        raise FloatingPointError(f"non-finite loss for example {example.id}")
    return loss


def _fallback_negative(dataset, batch, ex_idx, rng):
    """Negative paragraph borrowed from another example in the batch (used when
    every paragraph of the current example is positive)."""
    donors = [i for i in batch if i != ex_idx]
    if not donors:
        return None
    donor = dataset[donors[int(rng.integers(len(donors)))]]
    return donor.paragraphs[int(rng.integers(len(donor.paragraphs)))]


def train_epoch(model, dataset, labels, config: TrainConfig, epoch: int) -> EpochStats:
    """One pass over the dataset in a seeded shuffle order.

    Examples whose pair cannot be formed (no positive paragraph, or no
    negative available anywhere in the batch) are skipped and counted.
    """
    mode = config.aggregation_mode()
    order = make_rng(config.seed, STREAM_TRAIN, epoch).permutation(len(dataset)).tolist()
    loss_total, counted, skipped = 0.0, 0, 0
    for batch_start in range(0, len(order), config.batch_size):
        batch = order[batch_start : batch_start + config.batch_size]
        losses = []
        for offset, ex_idx in enumerate(batch):
            example = dataset[ex_idx]
            rng = make_rng(config.seed, STREAM_TRAIN, epoch, batch_start + offset + 1)
            pair = sample_pair([len(l) for l in labels[ex_idx]], rng)
            if pair is None:
                skipped += 1
                continue
            pos_idx, neg_idx = pair
            if neg_idx is not None:
                negative = example.paragraphs[neg_idx]
            else:
                negative = _fallback_negative(dataset, batch, ex_idx, rng)
                if negative is None:
                    skipped += 1
                    continue
            losses.append(
                example_loss(model, example, pos_idx, labels[ex_idx][pos_idx], negative, mode, rng)
            )
        if losses:
            batch_loss = losses[0]
            for extra in losses[1:]:
                batch_loss = batch_loss + extra
            batch_loss = batch_loss / float(len(losses))
            backward(batch_loss)
            model.store.adadelta_step(lr=config.lr, rho=config.rho, eps=config.eps)
            loss_total += batch_loss.item() * len(losses)
            counted += len(losses)
    mean = loss_total / counted if counted else None
    return EpochStats(epoch=epoch, mean_loss=mean, skipped=skipped, steps=counted)


def train(model, dataset, config: TrainConfig, start_epoch: int = 0, log=None):
    """Run config.epochs training epochs (resuming at start_epoch); returns the
    per-epoch stats.  `log`, when given, is called with each EpochStats."""
    labels = paragraph_label_table(dataset)
    history = []
    for epoch in range(start_epoch, config.epochs):
        stats = train_epoch(model, dataset, labels, config, epoch)
        history.append(stats)
        if log is not None:
            log(stats)
    return history


# ---------------------------------------------------------------- inference


def top_indices(values: np.ndarray, k: int):
    """Indices of the k largest entries, ties resolved toward the lower index."""
    order = np.argsort(-np.asarray(values), kind="stable")
    return order[: max(k, 0)].tolist()


def beam_spans(start_probs, end_dist_for, k1: int, k2: int):
    """Generic start/end beam over plain arrays.

    `end_dist_for(s)` returns the end-probability array conditioned on start
    s.  Yields (start, end, start_prob, end_prob) for the top-k1 starts and
    top-k2 ends each; positions before the start carry zero probability and
    are dropped.
    """
    if k1 < 1 or k2 < 1:
        raise ValueError(f"beam sizes must be >= 1, got k1={k1}, k2={k2}")
    spans = []
    for s in top_indices(start_probs, k1):
        ends = end_dist_for(s)
        for e in top_indices(ends, k2):
            if e < s:
                continue
            spans.append((s, e, float(start_probs[s]), float(ends[e])))
    return spans


def beam_candidates(context, paragraph, params, k1: int, k2: int, start_dist=None):
    """Up to k1*k2 scored SpanCandidates for one paragraph."""
    starts = start_dist if start_dist is not None else start_distribution(context, params)
    cache = {}

    def ends_for(s):
        if s not in cache:
            cache[s] = end_distribution(context, starts, s, params).data
        return cache[s]

    return [
        SpanCandidate(
            start=s,
            end=e,
            start_prob=sp,
            end_prob=ep,
            span_prob=sp * ep,
            answer_text=paragraph.span_text(s, e),
        )
        for s, e, sp, ep in beam_spans(starts.probs.data, ends_for, k1, k2)
    ]


def combine_scores(quality_probs, groups_per_paragraph) -> dict:
    """Mix per-paragraph answer probabilities with the quality weights:
    S(A) = sum_i q_i * p_i(A).  A paragraph without the answer contributes 0."""
    scores = {}
    for q_i, groups in zip(quality_probs, groups_per_paragraph):
        for g in groups:
            scores[g.answer_text] = scores.get(g.answer_text, 0.0) + q_i * g.aggregated_prob
    return scores


def best_answer(scores: dict) -> str:
    """Argmax answer string; ties go to the lexicographically smaller key."""
    if not scores:
        raise ValueError("no answer candidates to choose from")
    return min(scores.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def predict(model, example, mode: AggregationMode, k1: int, k2: int, rng=None) -> Prediction:
    """Scores for every answer string surfaced by the per-paragraph beams.

    With a single paragraph the quality weight collapses to 1 and the score
    is just the paragraph-level probability.
    """
    if not example.paragraphs:
        raise ValueError(f"example {example.id} has no paragraphs")
    with no_grad():
        logits, per_paragraph = [], []
        for paragraph in example.paragraphs:
            ctx = model.encode_paragraph(example.question, paragraph.tokens)
            starts = start_distribution(ctx, model.decoder)
            cands = beam_candidates(ctx, paragraph, model.decoder, k1, k2, start_dist=starts)
            per_paragraph.append(group_candidates(cands, mode, rng))
            logits.append(quality_logit(ctx, starts, model.quality).item())
        quality = normalize_qualities(logits)
        scores = combine_scores(quality.probs, per_paragraph)
        best = best_answer(scores)
        return Prediction(
            example_id=example.id,
            best_answer=best,
            answer_scores=scores,
            paragraph_probs=quality.probs,
            paragraph_groups=per_paragraph,
        )


def predict_dataset(model, dataset, mode: AggregationMode, k1: int, k2: int, seed: int = 0, threads: int = 1):
    """Predictions in dataset order; each example gets its own derived stream,
    so results do not depend on thread scheduling."""

    def run(item):
        index, example = item
        return predict(model, example, mode, k1, k2, make_rng(seed, STREAM_PREDICT, index))

    items = list(enumerate(dataset))
    if threads <= 1:
        return [run(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, items))


# ------------------------------------------------------------------ metrics

_ARTICLE = re.compile(r"\b(a|an|the)\b")


def normalize_for_metric(text: str) -> str:
    text = "".join(ch for ch in text.lower() if ch not in string.punctuation)
    return " ".join(_ARTICLE.sub(" ", text).split())


def exact_match(prediction: str, golds) -> int:
    norm = normalize_for_metric(prediction)
    return int(any(norm == normalize_for_metric(g) for g in golds))


def token_f1(prediction: str, golds) -> float:
    pred_tokens = normalize_for_metric(prediction).split()
    best = 0.0
    for gold in golds:
        gold_tokens = normalize_for_metric(gold).split()
        if not pred_tokens and not gold_tokens:
            best = max(best, 1.0)
            continue
        common = Counter(pred_tokens) & Counter(gold_tokens)
        overlap = sum(common.values())
        if overlap == 0:
            continue
        precision = overlap / len(pred_tokens)
        recall = overlap / len(gold_tokens)
        best = max(best, 2 * precision * recall / (precision + recall))
    return best


def average_precision(ranked_labels):
    """AP of a ranked 0/1 label list; None when there is no positive."""
    hits, acc = 0, 0.0
    for rank, label in enumerate(ranked_labels, start=1):
        if label:
            hits += 1
            acc += hits / rank
    return acc / hits if hits else None


def map_from_scores(scored):
    """Mean AP over (scores, labels) pairs; higher score = better rank, ties
    keep original (retrieval) order.  Returns (map or None, skipped count)."""
    aps, skipped = [], 0
    for scores, labels in scored:
        order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
        ap = average_precision([labels[i] for i in order])
        if ap is None:
            skipped += 1
        else:
            aps.append(ap)
    return (sum(aps) / len(aps) if aps else None), skipped


def paragraph_quality_probs(model, example):
    """Normalized quality of each paragraph, skipping span decoding."""
    with no_grad():
        logits = []
        for paragraph in example.paragraphs:
            ctx = model.encode_paragraph(example.question, paragraph.tokens)
            starts = start_distribution(ctx, model.decoder)
            logits.append(quality_logit(ctx, starts, model.quality).item())
    return normalize_qualities(logits).probs


def paragraph_map(model, dataset, threads: int = 1):
    """MAP of quality-ranked paragraphs against contains-answer labels."""

    def run(example):
        probs = paragraph_quality_probs(model, example)
        labels = [1 if label_spans(p, example.answers) else 0 for p in example.paragraphs]
        return probs, labels

    if threads <= 1:
        scored = [run(ex) for ex in dataset]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scored = list(pool.map(run, dataset))
    return map_from_scores(scored)[0]


def evaluate_dataset(model, dataset, mode: AggregationMode, k1: int, k2: int, seed: int = 0, threads: int = 1, predictions=None):
    """EM / F1 / MAP / mean predicted answer length over a dataset."""
    if not dataset:
        raise ValueError("evaluate_dataset needs a nonempty dataset")
    if predictions is None:
        predictions = predict_dataset(model, dataset, mode, k1, k2, seed=seed, threads=threads)
    em_total, f1_total, lengths, scored = 0, 0.0, [], []
    for example, pred in zip(dataset, predictions):
        em_total += exact_match(pred.best_answer, example.answers)
        f1_total += token_f1(pred.best_answer, example.answers)
        lengths.append(len(pred.best_answer.split()))
        labels = [1 if label_spans(p, example.answers) else 0 for p in example.paragraphs]
        scored.append((pred.paragraph_probs, labels))
    map_value, _ = map_from_scores(scored)
    n = len(dataset)
    return {
        "em": em_total / n,
        "f1": f1_total / n,
        "map": map_value,
        "avg_answer_len": sum(lengths) / n,
        "n": n,
    }
