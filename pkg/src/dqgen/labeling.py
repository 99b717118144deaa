"""Automatic difficulty labeling via pluggable reader oracles.

An example is Easy when every reader answers it correctly under exact
match, Hard when every reader gets it wrong, and Dropped otherwise. Readers
are re-fit per fold so no reader ever trains on the fold it labels; the
report carries a per-example audit trail of the folds each reader saw.
"""

import math
import string
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .data import Difficulty
from .errors import ContractError

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ARTICLES = {"a", "an", "the"}


def normalize_answer(text):
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    lowered = text.lower().translate(_PUNCT_TABLE)
    return " ".join(tok for tok in lowered.split() if tok not in _ARTICLES)


def exact_match(pred, gold):
    return normalize_answer(pred) == normalize_answer(gold)


def token_f1(pred, gold):
    """Token-multiset overlap F1 over normalized answers, in [0, 1]."""
    pred_tokens = normalize_answer(pred).split()
    gold_tokens = normalize_answer(gold).split()
    if not pred_tokens or not gold_tokens:
        return 1.0 if pred_tokens == gold_tokens else 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


class ReaderOracle:
    """Trainable extractive answer predictor used by the labeling protocol.

    Subclasses implement _fit and _predict; this base tracks fitted state
    and which example ids were seen during fit, for leakage auditing."""

    name = "reader"
    max_span = 5
    window = 3

    def __init__(self):
        self._fitted = False
        self.fit_ids = frozenset()

    def fit(self, train_examples, dev_examples):
        self._fit(train_examples, dev_examples)
        self.fit_ids = frozenset(ex.id for ex in list(train_examples) + list(dev_examples))
        self._fitted = True
        return self

    def predict(self, sentence_tokens, question_tokens):
        if not self._fitted:
            raise ContractError(f"reader {self.name!r} used before fit")
        return self._predict(list(sentence_tokens), list(question_tokens))

    def _fit(self, train_examples, dev_examples):
        raise NotImplementedError

    def _predict(self, sentence_tokens, question_tokens):
        raise NotImplementedError

    # shared helpers ------------------------------------------------------

    def _learn_idf(self, examples):
        df = Counter()
        for ex in examples:
            df.update(set(ex.sentence_tokens))
        n = len(examples)
        self._idf = {tok: math.log((1 + n) / (1 + c)) + 1.0 for tok, c in df.items()}
        self._idf_default = math.log(1 + n) + 1.0

    def _idf_of(self, token):
        return self._idf.get(token, self._idf_default)

    def _candidate_spans(self, m):
        for start in range(m):
            for end in range(start, min(start + self.max_span, m)):
                yield start, end

    def _side_windows(self, sentence, start, end):
        left = set(sentence[max(0, start - self.window):start])
        right = set(sentence[end + 1:end + 1 + self.window])
        return left, right


class WindowReader(ReaderOracle):
    """Scores each candidate span by IDF-weighted overlap between the
    question and a fixed-width window around the span; leftmost argmax.

    Matches in the left window count full weight, matches in the right
    window half weight: questions usually quote the context preceding the
    answer, and the asymmetry keeps a span from tying with its mirror
    image on the other side of the hint words."""

    name = "window"
    right_weight = 0.5

    def _fit(self, train_examples, dev_examples):
        self._learn_idf(train_examples)

    def _predict(self, sentence, question):
        q_tokens = set(question)
        best_score, best_span = -1.0, (0, 0)
        for start, end in self._candidate_spans(len(sentence)):
            left, right = self._side_windows(sentence, start, end)
            score = sum(self._idf_of(t) for t in q_tokens if t in left)
            score += self.right_weight * sum(self._idf_of(t) for t in q_tokens if t in right)
            if score > best_score:
                best_score, best_span = score, (start, end)
        s, e = best_span
        return " ".join(sentence[s:e + 1])


class FeatureReader(ReaderOracle):
    """Logistic scorer over per-span features (side-split windowed overlap,
    span length, distance-decayed overlap) trained on the gold spans of its
    training folds; leftmost argmax. Unlike WindowReader's fixed directional
    prior, any left/right preference here is learned from the data."""

    name = "feature"
    iterations = 150
    lr = 0.5

    def _features(self, sentence, q_tokens, start, end):
        left, right = self._side_windows(sentence, start, end)
        overlap_left = sum(self._idf_of(t) for t in q_tokens if t in left)
        overlap_right = sum(self._idf_of(t) for t in q_tokens if t in right)
        decayed = 0.0
        for tok in q_tokens:
            # occurrences inside the span are ignored: a span that contains
            # the question's own words is evidence against it being the answer
            dists = [start - i if i < start else i - end
                     for i, s in enumerate(sentence) if s == tok and not start <= i <= end]
            if dists:
                decayed += self._idf_of(tok) / (1.0 + min(dists))
        return np.array([overlap_left, overlap_right, float(end - start + 1), decayed])

    def _fit(self, train_examples, dev_examples):
        self._learn_idf(train_examples)
        rows, labels = [], []
        for ex in train_examples:
            q_tokens = set(ex.question_tokens)
            sentence = list(ex.sentence_tokens)
            for start, end in self._candidate_spans(len(sentence)):
                rows.append(self._features(sentence, q_tokens, start, end))
                labels.append(1.0 if (start, end) == tuple(ex.answer_span) else 0.0)
        x = np.array(rows)
        y = np.array(labels)
        self._mean = x.mean(axis=0)
        self._std = x.std(axis=0) + 1e-8
        xs = (x - self._mean) / self._std
        w = np.zeros(xs.shape[1])
        b = 0.0
        for _ in range(self.iterations):
            z = xs @ w + b
            p = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
            grad = p - y
            w -= self.lr * (xs.T @ grad) / len(y)
            b -= self.lr * grad.mean()
        self._w = w
        self._b = b

    def _predict(self, sentence, question):
        q_tokens = set(question)
        best_score, best_span = -np.inf, (0, 0)
        for start, end in self._candidate_spans(len(sentence)):
            feats = (self._features(sentence, q_tokens, start, end) - self._mean) / self._std
            score = float(feats @ self._w + self._b)
            if score > best_score + 1e-12:
                best_score, best_span = score, (start, end)
        s, e = best_span
        return " ".join(sentence[s:e + 1])


def builtin_readers():
    return [WindowReader(), FeatureReader()]


@dataclass
class LabelEntry:
    example_id: str
    fold: int
    predictions: dict  # reader name -> predicted text
    verdicts: dict     # reader name -> exact-match boolean
    label: str         # "easy" | "hard" | "dropped"


@dataclass
class LabelReport:
    entries: list
    counts: dict
    audit: dict  # reader name -> {labeled fold -> sorted train+dev fold ids}
    k: int
    seed: int

    def label_for(self, example_id):
        for entry in self.entries:
            if entry.example_id == example_id:
                return entry.label
        raise KeyError(example_id)

    def to_dict(self):
        return {
            "k": self.k,
            "seed": self.seed,
            "counts": self.counts,
            "audit": {name: {str(f): folds for f, folds in per.items()}
                      for name, per in self.audit.items()},
            "examples": [{
                "id": e.example_id,
                "fold": e.fold,
                "predictions": e.predictions,
                "exact_match": e.verdicts,
                "label": e.label,
            } for e in self.entries],
        }


def label_dataset(examples, readers, k=9, seed=0):
    """Run the k-fold labeling protocol and return a LabelReport.

    Each fold is labeled by readers fit on k-2 other folds, with the
    cyclically preceding fold held out as validation, so the labeled fold
    is never seen during fit."""
    if k < 3:
        raise ContractError("k must be >= 3 (need train, validation and labeled folds)")
    if len(examples) < k:
        raise ContractError(f"need at least k={k} examples, got {len(examples)}")
    if len(readers) < 2:
        raise ContractError("the protocol needs at least two readers")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(examples))
    folds = [list(order[f::k]) for f in range(k)]

    entries_by_index = {}
    audit = {reader.name: {} for reader in readers}
    for f in range(k):
        val_fold = (f - 1) % k
        train_folds = [g for g in range(k) if g not in (f, val_fold)]
        train_set = [examples[i] for g in train_folds for i in folds[g]]
        dev_set = [examples[i] for i in folds[val_fold]]
        fitted = []
        for reader in readers:
            reader.fit(train_set, dev_set)
            audit[reader.name][f] = sorted(train_folds + [val_fold])
            fitted.append(reader)
        for i in folds[f]:
            ex = examples[i]
            predictions = {}
            verdicts = {}
            for reader in fitted:
                pred = reader.predict(ex.sentence_tokens, ex.question_tokens)
                predictions[reader.name] = pred
                verdicts[reader.name] = exact_match(pred, ex.answer_text)
            if all(verdicts.values()):
                label = "easy"
            elif not any(verdicts.values()):
                label = "hard"
            else:
                label = "dropped"
            entries_by_index[i] = LabelEntry(ex.id, f, predictions, verdicts, label)

    entries = [entries_by_index[i] for i in range(len(examples))]
    counts = Counter(e.label for e in entries)
    return LabelReport(
        entries=entries,
        counts={"easy": counts.get("easy", 0), "hard": counts.get("hard", 0),
                "dropped": counts.get("dropped", 0)},
        audit=audit,
        k=k,
        seed=seed,
    )


def apply_labels(examples, report):
    """New examples with difficulties from a LabelReport (dropped -> unlabeled)."""
    from dataclasses import replace

    mapping = {e.example_id: e.label for e in report.entries}
    out = []
    for ex in examples:
        label = mapping[ex.id]
        difficulty = Difficulty(label) if label in ("easy", "hard") else Difficulty.UNLABELED
        out.append(replace(ex, difficulty=difficulty))
    return out
