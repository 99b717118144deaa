"""Tokenization, examples, vocabulary, dataset I/O, and the synthetic corpus.

The JSONL dataset schema (one object per line) is documented in
schemas/dataset.schema.json: fields id, sentence, answer_start (character
offset), answer_text, question, difficulty ("easy" | "hard" | null).
"""

import json
import string
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AlignmentError, ContractError, ParseError

PAD_ID, UNK_ID, SOS_ID, EOS_ID = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<unk>", "<s>", "</s>")

_PUNCT = set(string.punctuation)


class Difficulty(Enum):
    EASY = "easy"
    HARD = "hard"
    UNLABELED = "unlabeled"

    @property
    def labeled(self):
        return self is not Difficulty.UNLABELED

    def flipped(self):
        if self is Difficulty.EASY:
            return Difficulty.HARD
        if self is Difficulty.HARD:
            return Difficulty.EASY
        raise ContractError("cannot flip an unlabeled difficulty")


def tokenize_with_spans(text):
    """Lowercased tokens with their [start, end) character offsets in `text`.

    Splits on whitespace; every punctuation character is its own token."""
    spans = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in _PUNCT:
            spans.append((ch, i, i + 1))
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in _PUNCT:
                j += 1
            spans.append((text[i:j].lower(), i, j))
            i = j
    return spans


def tokenize(text):
    return [tok for tok, _, _ in tokenize_with_spans(text)]


def char_span_to_token_span(sentence, char_start, answer_text):
    """Map a character-offset answer to an inclusive token index span."""
    char_end = char_start + len(answer_text)
    if sentence[char_start:char_end] != answer_text:
        raise AlignmentError(
            f"answer {answer_text!r} not found at offset {char_start} "
            f"(saw {sentence[char_start:char_end]!r})")
    spans = tokenize_with_spans(sentence)
    covered = [k for k, (_, s, e) in enumerate(spans) if s < char_end and e > char_start]
    if not covered:
        raise AlignmentError(f"answer {answer_text!r} covers no tokens")
    first, last = covered[0], covered[-1]
    if spans[first][1] != char_start or spans[last][2] != char_end:
        raise AlignmentError(
            f"answer {answer_text!r} at offset {char_start} splits a token "
            f"(nearest tokens {spans[first][0]!r}..{spans[last][0]!r})")
    return first, last


@dataclass(frozen=True)
class Example:
    """One (sentence, answer span, question, difficulty) record."""

    id: str
    sentence_tokens: tuple
    answer_span: tuple  # inclusive (start, end) token indices
    question_tokens: tuple
    difficulty: Difficulty

    def __post_init__(self):
        object.__setattr__(self, "sentence_tokens", tuple(self.sentence_tokens))
        object.__setattr__(self, "question_tokens", tuple(self.question_tokens))
        object.__setattr__(self, "answer_span", tuple(self.answer_span))
        s, e = self.answer_span
        if not self.sentence_tokens or not self.question_tokens:
            raise ContractError(f"example {self.id}: empty sentence or question")
        if not 0 <= s <= e < len(self.sentence_tokens):
            raise ContractError(f"example {self.id}: answer span {self.answer_span} "
                                f"outside sentence of {len(self.sentence_tokens)} tokens")

    @property
    def answer_tokens(self):
        s, e = self.answer_span
        return self.sentence_tokens[s:e + 1]

    @property
    def answer_text(self):
        return " ".join(self.answer_tokens)

    @property
    def sentence_text(self):
        return " ".join(self.sentence_tokens)

    @property
    def question_text(self):
        return " ".join(self.question_tokens)


class Vocab:
    """Token/id bijection with reserved PAD/UNK/SOS/EOS ids."""

    def __init__(self, tokens, min_freq=1):
        self._tokens = list(RESERVED_TOKENS) + [t for t in tokens if t not in RESERVED_TOKENS]
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise ContractError("duplicate tokens passed to Vocab")
        self.min_freq = min_freq

    def __len__(self):
        return len(self._tokens)

    def __contains__(self, token):
        return token in self._ids

    def id(self, token):
        return self._ids.get(token, UNK_ID)

    def token(self, idx):
        return self._tokens[idx]

    @property
    def tokens(self):
        return tuple(self._tokens)

    def extended_ids(self, tokens):
        """Ids over vocabulary plus per-call out-of-vocabulary slots.

        Returns (ids, oov_tokens): source-only tokens get ids len(vocab),
        len(vocab)+1, ... in order of first occurrence."""
        ids, oov = [], []
        for tok in tokens:
            if tok in self._ids:
                ids.append(self._ids[tok])
            else:
                if tok not in oov:
                    oov.append(tok)
                ids.append(len(self._tokens) + oov.index(tok))
        return ids, oov

    def to_dict(self):
        return {"tokens": self._tokens[len(RESERVED_TOKENS):], "min_freq": self.min_freq}

    @classmethod
    def from_dict(cls, d):
        return cls(d["tokens"], d["min_freq"])


def build_vocab(examples, min_freq=1):
    """Shared encoder/decoder vocabulary over sentence and question tokens.

    Order: frequency descending, ties broken lexicographically."""
    if min_freq < 1:
        raise ContractError("min_freq must be >= 1")
    if not examples:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    counts = {}
    for ex in examples:
        for tok in list(ex.sentence_tokens) + list(ex.question_tokens):
            counts[tok] = counts.get(tok, 0) + 1
    kept = sorted((t for t, c in counts.items() if c >= min_freq),
                  key=lambda t: (-counts[t], t))
    return Vocab(kept, min_freq)


def _difficulty_from_json(value, lineno):
    if value is None:
        return Difficulty.UNLABELED
    if value in ("easy", "hard"):
        return Difficulty(value)
    raise ParseError(f"line {lineno}: difficulty must be 'easy', 'hard' or null, got {value!r}")


def load_jsonl(path):
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            try:
                sentence = obj["sentence"]
                answer_start = obj["answer_start"]
                answer_text = obj["answer_text"]
                question = obj["question"]
                ex_id = obj["id"]
            except KeyError as exc:
                raise ParseError(f"line {lineno}: missing field {exc.args[0]!r}") from exc
            try:
                span = char_span_to_token_span(sentence, answer_start, answer_text)
            except AlignmentError as exc:
                raise AlignmentError(f"example {ex_id!r}: {exc}") from exc
            examples.append(Example(
                id=ex_id,
                sentence_tokens=tokenize(sentence),
                answer_span=span,
                question_tokens=tokenize(question),
                difficulty=_difficulty_from_json(obj.get("difficulty"), lineno),
            ))
    return examples


def example_to_json(ex):
    """Canonical JSON object for an example (tokens joined by single spaces)."""
    s, _ = ex.answer_span
    answer_start = len(" ".join(ex.sentence_tokens[:s])) + (1 if s > 0 else 0)
    return {
        "id": ex.id,
        "sentence": ex.sentence_text,
        "answer_start": answer_start,
        "answer_text": ex.answer_text,
        "question": ex.question_text,
        "difficulty": ex.difficulty.value if ex.difficulty.labeled else None,
    }


def save_jsonl(examples, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_json(ex), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


# --- synthetic corpus ---------------------------------------------------

SYNTH_SENTENCE_LEN = 12
SYNTH_EASY_RATIO = 0.5888  # target share of easy labels

SYNTH_WORD_POOL = (
    "amber", "anchor", "basil", "beacon", "canyon", "cedar", "comet", "coral",
    "crystal", "delta", "ember", "falcon", "garnet", "glacier", "harbor",
    "hazel", "indigo", "jasper", "juniper", "lagoon", "lantern", "maple",
    "marble", "meadow", "nectar", "obsidian", "onyx", "orchid", "pebble",
    "quartz", "raven", "saffron", "sierra", "summit", "thistle", "timber",
    "tundra", "velvet", "willow", "zephyr",
)


def generate_synthetic_corpus(n, seed, easy_max_dist=2, hard_min_dist=6):
    """Templated (sentence, answer, question) triples with controllable hints.

    Every sentence is a fixed-length sequence of distinct content words with
    a single-token answer. Easy questions quote sentence words within
    `easy_max_dist` tokens of the answer, hard questions quote words at
    least `hard_min_dist` tokens away, so question difficulty is measurable
    by construction. Deterministic for a given seed."""
    if n < 1:
        raise ContractError("n must be >= 1")
    if easy_max_dist < 1:
        raise ContractError("easy_max_dist must be >= 1")
    if easy_max_dist >= hard_min_dist:
        raise ContractError(
            f"easy_max_dist ({easy_max_dist}) must be < hard_min_dist ({hard_min_dist})")
    m = SYNTH_SENTENCE_LEN
    if hard_min_dist + 1 > m - 1:
        raise ContractError(
            f"template of {m} tokens is too short for hard_min_dist={hard_min_dist}")

    rng = np.random.default_rng(seed)
    n_easy = round(n * SYNTH_EASY_RATIO)
    labels = [Difficulty.EASY] * n_easy + [Difficulty.HARD] * (n - n_easy)
    rng.shuffle(labels)

    examples = []
    for i, label in enumerate(labels):
        toks = [str(t) for t in rng.choice(SYNTH_WORD_POOL, size=m, replace=False)]
        p = int(rng.integers(hard_min_dist + 1, m))
        if label is Difficulty.EASY:
            band = range(1, easy_max_dist + 1)
        else:
            band = range(hard_min_dist, hard_min_dist + 2)
        k = min(2, len(band))
        dists = sorted(int(d) for d in rng.choice(list(band), size=k, replace=False))
        hints = [toks[p - d] for d in dists]
        examples.append(Example(
            id=f"synth-{i:05d}",
            sentence_tokens=toks,
            answer_span=(p, p),
            question_tokens=["what", "is", *hints, "?"],
            difficulty=label,
        ))
    return examples
