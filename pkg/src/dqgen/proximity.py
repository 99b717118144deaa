"""Token distances to the answer span and corpus-level distance statistics.

Clipped distances feed the position-embedding tables; the statistics use
unclipped distances (clipping is an embedding concern, not a measurement
one).
"""

from dataclasses import dataclass

from .data import Difficulty
from .errors import ContractError
from .stopwords import is_stopword


@dataclass(frozen=True)
class PositionMap:
    """Per-token distance to the nearest answer token, clipped at max_dist."""

    distances: tuple
    max_dist: int


def relative_positions(m, answer_span, max_dist=20):
    s, e = answer_span
    if not 0 <= s <= e < m:
        raise ContractError(f"answer span {answer_span} invalid for {m} tokens")
    if max_dist < 1:
        raise ContractError("max_dist must be >= 1")
    dists = []
    for i in range(m):
        d = 0 if s <= i <= e else min(abs(i - s), abs(i - e))
        dists.append(min(d, max_dist))
    return PositionMap(tuple(dists), max_dist)


def _unclipped_distance(i, answer_span):
    s, e = answer_span
    return 0 if s <= i <= e else min(abs(i - s), abs(i - e))


def avg_question_word_distance(example, stop_check=is_stopword):
    """Mean unclipped distance of hint words to the answer, or None.

    A hint word is a distinct non-stopword question token that also occurs
    in the sentence; when it occurs several times, the occurrence nearest
    the answer counts (the strongest hint)."""
    qualifying = []
    seen = set()
    for tok in example.question_tokens:
        if tok in seen or stop_check(tok):
            continue
        seen.add(tok)
        occurrences = [i for i, s in enumerate(example.sentence_tokens) if s == tok]
        if occurrences:
            qualifying.append(min(_unclipped_distance(i, example.answer_span)
                                  for i in occurrences))
    if not qualifying:
        return None
    return sum(qualifying) / len(qualifying)


def _sentence_word_distance(example, stop_check):
    """Mean unclipped distance of non-stopword, non-answer sentence tokens."""
    s, e = example.answer_span
    dists = [_unclipped_distance(i, example.answer_span)
             for i, tok in enumerate(example.sentence_tokens)
             if not s <= i <= e and not stop_check(tok)]
    if not dists:
        return None
    return sum(dists) / len(dists)


@dataclass(frozen=True)
class ProximityStats:
    avg_qword_dist_easy: float | None
    avg_qword_dist_hard: float | None
    avg_qword_dist_all: float | None
    avg_sentword_dist: float | None
    count_easy: int
    count_hard: int
    count_all: int
    count_sent: int

    def to_dict(self):
        return {
            "avg_question_word_distance": {
                "easy": self.avg_qword_dist_easy,
                "hard": self.avg_qword_dist_hard,
                "all": self.avg_qword_dist_all,
            },
            "avg_sentence_word_distance": self.avg_sentword_dist,
            "counts": {
                "easy": self.count_easy,
                "hard": self.count_hard,
                "all": self.count_all,
                "sentence_words": self.count_sent,
            },
        }


def _mean(values):
    return sum(values) / len(values) if values else None


def corpus_proximity_stats(examples, stop_check=is_stopword):
    """Macro-averaged distance statistics (per example, then per stratum)."""
    easy, hard, every, sent = [], [], [], []
    for ex in examples:
        q = avg_question_word_distance(ex, stop_check)
        if q is not None:
            every.append(q)
            if ex.difficulty is Difficulty.EASY:
                easy.append(q)
            elif ex.difficulty is Difficulty.HARD:
                hard.append(q)
        s = _sentence_word_distance(ex, stop_check)
        if s is not None:
            sent.append(s)
    return ProximityStats(
        avg_qword_dist_easy=_mean(easy),
        avg_qword_dist_hard=_mean(hard),
        avg_qword_dist_all=_mean(every),
        avg_sentword_dist=_mean(sent),
        count_easy=len(easy),
        count_hard=len(hard),
        count_all=len(every),
        count_sent=len(sent),
    )
