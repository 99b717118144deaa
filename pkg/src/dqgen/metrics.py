"""Question-quality metrics and difficulty-control evaluation.

BLEU and ROUGE-L are reported in [0, 1]; reader-based EM/F1 aggregates and
the reversed-label gaps are reported as percentages in [0, 100], matching
the usual reading-comprehension score convention.
"""

import math
from collections import Counter
from dataclasses import dataclass

from .data import Difficulty
from .errors import ContractError
from .labeling import exact_match, token_f1
from .model import generate


@dataclass(frozen=True)
class GenerationRecord:
    example_id: str
    label_used: Difficulty
    question_tokens: tuple
    gold_question_tokens: tuple
    gold_answer_text: str

    def __post_init__(self):
        object.__setattr__(self, "question_tokens", tuple(self.question_tokens))
        object.__setattr__(self, "gold_question_tokens", tuple(self.gold_question_tokens))


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(candidates, references, max_n=4):
    """Corpus-level BLEU-1..max_n with brevity penalty, no smoothing.

    One reference per candidate; any zero modified precision at order n
    makes BLEU-n (and above) zero."""
    if not candidates:
        raise ContractError("BLEU over an empty corpus is undefined")
    if len(candidates) != len(references):
        raise ContractError(f"{len(candidates)} candidates vs {len(references)} references")

    cand_len = sum(len(c) for c in candidates)
    ref_len = sum(len(r) for r in references)
    precisions = []
    for n in range(1, max_n + 1):
        matched = 0
        total = 0
        for cand, ref in zip(candidates, references):
            cand_counts = _ngrams(cand, n)
            ref_counts = _ngrams(ref, n)
            matched += sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
            total += sum(cand_counts.values())
        precisions.append(matched / total if total else 0.0)

    bp = 1.0 if cand_len >= ref_len or cand_len == 0 else math.exp(1.0 - ref_len / cand_len)
    scores = []
    for n in range(1, max_n + 1):
        if any(p == 0.0 for p in precisions[:n]):
            scores.append(0.0)
        else:
            log_mean = sum(math.log(p) for p in precisions[:n]) / n
            scores.append(bp * math.exp(log_mean))
    return scores


def _lcs_length(a, b):
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidates, references):
    """Macro-averaged LCS-based F1 (beta = 1), in [0, 1]."""
    if not candidates:
        raise ContractError("ROUGE-L over an empty corpus is undefined")
    if len(candidates) != len(references):
        raise ContractError(f"{len(candidates)} candidates vs {len(references)} references")
    total = 0.0
    for cand, ref in zip(candidates, references):
        lcs = _lcs_length(cand, ref)
        if lcs == 0:
            continue
        precision = lcs / len(cand)
        recall = lcs / len(ref)
        total += 2 * precision * recall / (precision + recall)
    return total / len(candidates)


def answer_occurrence_rate(records):
    """Share of answer-token instances that appear in their own generated
    question; no stopword filtering."""
    total = 0
    leaked = 0
    for rec in records:
        question = set(rec.question_tokens)
        answer_tokens = rec.gold_answer_text.split()
        total += len(answer_tokens)
        leaked += sum(1 for tok in answer_tokens if tok in question)
    if total == 0:
        raise ContractError("no answer tokens present in the records")
    return leaked / total


# --- reader-based difficulty evaluation ----------------------------------


@dataclass(frozen=True)
class StratumScores:
    em: float   # percent
    f1: float   # percent
    count: int


@dataclass(frozen=True)
class GapReport:
    """Reader performance on true-label vs reversed-label generations.

    Gaps are oriented so a positive value means control capability: the
    easy-stratum gap is EM(true) - EM(reversed), the hard-stratum gap is
    EM(reversed) - EM(true). All scores are percentages."""

    per_reader: dict  # reader name -> stratum -> {"true", "reversed", "em_gap", "f1_gap"}

    def to_dict(self):
        out = {}
        for reader, strata in self.per_reader.items():
            out[reader] = {}
            for stratum, cell in strata.items():
                out[reader][stratum] = {
                    "true": vars(cell["true"]),
                    "reversed": vars(cell["reversed"]),
                    "em_gap": cell["em_gap"],
                    "f1_gap": cell["f1_gap"],
                }
        return out


def _audit_no_leak(readers, test_set):
    test_ids = {ex.id for ex in test_set}
    for reader in readers:
        seen = reader.fit_ids & test_ids
        if seen:
            raise ContractError(
                f"reader {reader.name!r} was fit on test examples: {sorted(seen)[:3]}...")


def _score_records(records, examples_by_id, reader):
    """Percent EM/F1 of a reader answering generated questions, per stratum."""
    per_stratum = {}
    for stratum in (Difficulty.EASY, Difficulty.HARD):
        subset = [r for r in records if examples_by_id[r.example_id].difficulty is stratum]
        if not subset:
            per_stratum[stratum.value] = StratumScores(em=0.0, f1=0.0, count=0)
            continue
        em_total = 0.0
        f1_total = 0.0
        for rec in subset:
            ex = examples_by_id[rec.example_id]
            pred = reader.predict(ex.sentence_tokens, rec.question_tokens)
            em_total += float(exact_match(pred, ex.answer_text))
            f1_total += token_f1(pred, ex.answer_text)
        per_stratum[stratum.value] = StratumScores(
            em=100.0 * em_total / len(subset),
            f1=100.0 * f1_total / len(subset),
            count=len(subset),
        )
    return per_stratum


def generate_records(test_set, config, params, vocab, label_mode="gold"):
    """GenerationRecords for a labeled test set.

    label_mode: "gold" uses each example's own label, "reversed" flips it,
    "easy"/"hard" force one label for every example."""
    records = []
    for ex in test_set:
        if label_mode in ("gold", "reversed") and not ex.difficulty.labeled:
            raise ContractError(f"example {ex.id} is unlabeled; cannot use {label_mode} labels")
        if label_mode == "gold":
            label = ex.difficulty
        elif label_mode == "reversed":
            label = ex.difficulty.flipped()
        elif label_mode in ("easy", "hard"):
            label = Difficulty(label_mode)
        else:
            raise ContractError(f"unknown label mode {label_mode!r}")
        question = generate(ex, label, config, params, vocab)
        records.append(GenerationRecord(
            example_id=ex.id,
            label_used=label,
            question_tokens=tuple(question),
            gold_question_tokens=ex.question_tokens,
            gold_answer_text=ex.answer_text,
        ))
    return records


def score_generations(records, examples, readers):
    """Per-reader, per-stratum EM/F1 (percent) for existing records."""
    examples_by_id = {ex.id: ex for ex in examples}
    missing = [r.example_id for r in records if r.example_id not in examples_by_id]
    if missing:
        raise ContractError(f"records reference unknown example ids: {missing[:3]}")
    _audit_no_leak(readers, [examples_by_id[r.example_id] for r in records])
    return {reader.name: _score_records(records, examples_by_id, reader)
            for reader in readers}


def difficulty_eval(test_set, readers, config, params, vocab):
    """Reader EM/F1 on questions generated with the TRUE difficulty labels,
    split by gold stratum."""
    if any(not ex.difficulty.labeled for ex in test_set):
        raise ContractError("difficulty_eval needs a fully labeled test set")
    records = generate_records(test_set, config, params, vocab, label_mode="gold")
    return score_generations(records, test_set, readers)


def gap_from_records(true_records, reversed_records, examples, readers):
    """GapReport from two generation sets (true vs reversed labels)."""
    scores_true = score_generations(true_records, examples, readers)
    scores_rev = score_generations(reversed_records, examples, readers)
    per_reader = {}
    for name in scores_true:
        per_reader[name] = {}
        for stratum in ("easy", "hard"):
            cell_true = scores_true[name][stratum]
            cell_rev = scores_rev[name][stratum]
            sign = 1.0 if stratum == "easy" else -1.0
            per_reader[name][stratum] = {
                "true": cell_true,
                "reversed": cell_rev,
                "em_gap": sign * (cell_true.em - cell_rev.em),
                "f1_gap": sign * (cell_true.f1 - cell_rev.f1),
            }
    return GapReport(per_reader=per_reader)


def reversed_label_gap(test_set, readers, config, params, vocab):
    """Generate with true and reversed labels, then report the gaps."""
    if any(not ex.difficulty.labeled for ex in test_set):
        raise ContractError("reversed_label_gap needs a fully labeled test set")
    true_records = generate_records(test_set, config, params, vocab, "gold")
    reversed_records = generate_records(test_set, config, params, vocab, "reversed")
    return gap_from_records(true_records, reversed_records, test_set, readers)
