"""Data model and dataset plumbing.

Covers tokenization, weak span labeling (every exact-match location of any
gold answer, found by scanning normalized tokens), corpus statistics, a
seeded synthetic dataset generator for fast end-to-end checks, and JSONL
load/save.

JSONL record shape, one object per line, UTF-8:
    {"id": ..., "question": ..., "answers": [...],
     "paragraphs": [{"id": ..., "text": ...}, ...]}
Paragraph order is meaningful (retrieval rank) and is preserved.
"""

import json
import string
from dataclasses import dataclass, field

from .diffmath.rng import STREAM_SYNTH, make_rng

_PUNCT = set(string.punctuation)


def tokenize(text):
    """Lowercased whitespace tokens with leading/trailing punctuation peeled off.

    Returns (tokens, offsets) where offsets[i] = (start, end) such that
    text[start:end] is token i's exact source substring (pre-lowercasing).
    """
    tokens, offsets = [], []
    i, n = 0, len(text)
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        s, e = i, j
        while s < e and text[s] in _PUNCT:
            tokens.append(text[s])
            offsets.append((s, s + 1))
            s += 1
        trail = []
        while e > s and text[e - 1] in _PUNCT:
            trail.append((e - 1, e))
            e -= 1
        if s < e:
            tokens.append(text[s:e].lower())
            offsets.append((s, e))
        for a, b in reversed(trail):
            tokens.append(text[a])
            offsets.append((a, b))
        i = j
    return tokens, offsets


def normalize_token(token: str) -> str:
    """Matching form of a token: lowercase, punctuation stripped from both ends."""
    return token.lower().strip(string.punctuation)


def answer_token_seq(answer: str):
    """Normalized token sequence of a gold answer; pure-punctuation tokens drop out."""
    tokens, _ = tokenize(answer)
    return [t for t in (normalize_token(tok) for tok in tokens) if t]


@dataclass(frozen=True, order=True)
class SpanLabel:
    """Inclusive token span [start, end] within one paragraph."""

    start: int
    end: int


@dataclass
class Paragraph:
    id: str
    tokens: list
    text: str
    char_offsets: list

    def span_text(self, start: int, end: int) -> str:
        """Raw text covered by the inclusive token span [start, end]."""
        return self.text[self.char_offsets[start][0] : self.char_offsets[end][1]]


@dataclass
class QAExample:
    id: str
    question: list
    answers: list
    paragraphs: list
    question_text: str = ""


def make_paragraph(pid: str, text: str, max_tokens=None) -> Paragraph:
    tokens, offsets = tokenize(text)
    if max_tokens is not None:
        tokens, offsets = tokens[:max_tokens], offsets[:max_tokens]
    return Paragraph(id=pid, tokens=tokens, text=text, char_offsets=offsets)


def label_spans(paragraph: Paragraph, answers):
    """All token spans whose per-token normalized form equals a normalized answer.

    Matches are whole-token only, may overlap across different answers, and
    come back sorted by (start, end) with duplicates removed.  No match for
    any answer yields an empty list — such paragraphs stay in the dataset
    as negatives.
    """
    norm = [normalize_token(t) for t in paragraph.tokens]
    found = set()
    for answer in answers:
        seq = answer_token_seq(answer)
        width = len(seq)
        if width == 0:
            continue
        for s in range(len(norm) - width + 1):
            if norm[s : s + width] == seq:
                found.add(SpanLabel(s, s + width - 1))
    return sorted(found)


@dataclass
class CorpusStats:
    paragraph_count: int
    negative_count: int
    positive_count: int
    span_total: int

    @property
    def neg_paragraph_ratio(self) -> float:
        return self.negative_count / self.paragraph_count

    @property
    def avg_answer_span_count(self) -> float:
        """Mean label count over paragraphs that have at least one label."""
        if self.positive_count == 0:
            return 0.0
        return self.span_total / self.positive_count

    @property
    def avg_answer_span_count_all(self) -> float:
        """Same numerator averaged over every paragraph (secondary reading)."""
        return self.span_total / self.paragraph_count

    def as_dict(self):
        return {
            "paragraph_count": self.paragraph_count,
            "negative_count": self.negative_count,
            "positive_count": self.positive_count,
            "span_total": self.span_total,
            "neg_paragraph_ratio": self.neg_paragraph_ratio,
            "avg_answer_span_count": self.avg_answer_span_count,
            "avg_answer_span_count_all": self.avg_answer_span_count_all,
        }


def corpus_stats(dataset) -> CorpusStats:
    """Negative-paragraph ratio and average span count across a labeled dataset."""
    paragraphs = negatives = positives = spans = 0
    for example in dataset:
        for paragraph in example.paragraphs:
            count = len(label_spans(paragraph, example.answers))
            paragraphs += 1
            if count == 0:
                negatives += 1
            else:
                positives += 1
                spans += count
    if paragraphs == 0:
        raise ValueError("corpus_stats needs at least one paragraph")
    return CorpusStats(paragraphs, negatives, positives, spans)


# --------------------------------------------------------------------------
# Synthetic data.
#
# Each question plants a 1-2 token answer inside "positive" paragraphs using
# a fixed cue pattern:  ... filler, CUE_A, CUE_B, <answer tokens>, CUE_C,
# filler ...  The cue tokens are reserved vocabulary entries that never occur
# as filler, so a model can learn "the span between CUE_B and CUE_C" and
# "paragraphs with cues are the good ones" from small data.  Distractor
# paragraphs are filler-only.  Filler never uses cue or answer tokens, so the
# planted occurrences are exactly the labeled ones.


@dataclass
class SynthConfig:
    num_examples: int = 100
    vocab_size: int = 100
    paragraphs_per_question: int = 3
    paragraph_len: int = 15
    distractor_ratio: float = 1 / 3
    multi_span_prob: float = 0.0
    seed: int = 0


N_CUE_TOKENS = 3
_MAX_ANSWER_LEN = 2
_BLOCK_OVERHEAD = 3  # CUE_A, CUE_B, ..., CUE_C


def _vocab_word(i: int) -> str:
    """Distinct lowercase pseudo-word for vocabulary slot i ('aaa', 'aab', ...)."""
    s = ""
    while True:
        s = chr(ord("a") + i % 26) + s
        i //= 26
        if i == 0:
            return s.rjust(3, "a")


def synth_vocab(size: int):
    return [_vocab_word(i) for i in range(size)]


def generate_synthetic(config: SynthConfig):
    """Deterministic synthetic dataset; same config (incl. seed) → same records."""
    k = config.paragraphs_per_question
    max_occurrences = 3 if config.multi_span_prob > 0 else 1
    need = max_occurrences * (_BLOCK_OVERHEAD + _MAX_ANSWER_LEN)
    if config.paragraph_len < need:
        raise ValueError(
            f"paragraph_len {config.paragraph_len} cannot hold {max_occurrences} "
            f"answer occurrence(s); need at least {need}"
        )
    if config.vocab_size < N_CUE_TOKENS + _MAX_ANSWER_LEN + 4:
        raise ValueError(f"vocab_size {config.vocab_size} too small to plant answers")
    if not 0.0 <= config.multi_span_prob <= 1.0:
        raise ValueError(f"multi_span_prob must be in [0, 1], got {config.multi_span_prob}")
    n_distractors = int(round(config.distractor_ratio * k))
    if not 0 <= n_distractors < k:
        raise ValueError(
            f"distractor_ratio {config.distractor_ratio} leaves no positive paragraph"
        )

    vocab = synth_vocab(config.vocab_size)
    cue_a, cue_b, cue_c = vocab[:N_CUE_TOKENS]
    candidates = vocab[N_CUE_TOKENS:]
    rng = make_rng(config.seed, STREAM_SYNTH)

    dataset = []
    for ei in range(config.num_examples):
        answer_len = int(rng.integers(1, _MAX_ANSWER_LEN + 1))
        answer_tokens = list(rng.choice(candidates, size=answer_len, replace=False))
        filler = [w for w in candidates if w not in answer_tokens]
        question = list(rng.choice(filler, size=4, replace=True))
        distractor_at = set(rng.permutation(k)[:n_distractors].tolist())

        paragraphs = []
        for pi in range(k):
            pid = f"synth-{ei:04d}-p{pi}"
            if pi in distractor_at:
                tokens = list(rng.choice(filler, size=config.paragraph_len, replace=True))
            else:
                occurrences = 1 + int(rng.binomial(2, config.multi_span_prob))
                block = [cue_a, cue_b, *answer_tokens, cue_c]
                gap_total = config.paragraph_len - occurrences * len(block)
                gaps = rng.multinomial(gap_total, [1.0 / (occurrences + 1)] * (occurrences + 1))
                tokens = []
                for g in gaps[:-1]:
                    tokens.extend(rng.choice(filler, size=g, replace=True))
                    tokens.extend(block)
                tokens.extend(rng.choice(filler, size=gaps[-1], replace=True))
            paragraphs.append(make_paragraph(pid, " ".join(tokens)))

        dataset.append(
            QAExample(
                id=f"synth-{ei:04d}",
                question=question,
                answers=[" ".join(answer_tokens)],
                paragraphs=paragraphs,
                question_text=" ".join(question),
            )
        )
    return dataset


# --------------------------------------------------------------------------
# JSONL I/O.


def _require(record, key, line_no):
    if key not in record:
        raise ValueError(f"line {line_no}: missing field {key!r}")
    return record[key]


def load_dataset(path, max_paragraphs: int = 20, max_paragraph_tokens: int = 400):
    """Read a JSONL dataset, truncating to the first `max_paragraphs` paragraphs
    and the first `max_paragraph_tokens` tokens of each paragraph."""
    dataset = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {line_no}: invalid JSON: {exc}") from exc
            ex_id = str(_require(record, "id", line_no))
            question_text = _require(record, "question", line_no)
            answers = _require(record, "answers", line_no)
            raw_paragraphs = _require(record, "paragraphs", line_no)
            if not answers:
                raise ValueError(f"line {line_no}: empty answers list")
            if not raw_paragraphs:
                raise ValueError(f"line {line_no}: empty paragraphs list")
            paragraphs = []
            for p in raw_paragraphs[:max_paragraphs]:
                paragraph = make_paragraph(
                    str(_require(p, "id", line_no)),
                    _require(p, "text", line_no),
                    max_tokens=max_paragraph_tokens,
                )
                if not paragraph.tokens:
                    raise ValueError(f"line {line_no}: paragraph {paragraph.id!r} has no tokens")
                paragraphs.append(paragraph)
            question_tokens, _ = tokenize(question_text)
            dataset.append(
                QAExample(
                    id=ex_id,
                    question=question_tokens,
                    answers=[str(a) for a in answers],
                    paragraphs=paragraphs,
                    question_text=question_text,
                )
            )
    return dataset


def save_dataset(dataset, path):
    with open(path, "w", encoding="utf-8") as fh:
        for example in dataset:
            record = {
                "id": example.id,
                "question": example.question_text or " ".join(example.question),
                "answers": list(example.answers),
                "paragraphs": [{"id": p.id, "text": p.text} for p in example.paragraphs],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
