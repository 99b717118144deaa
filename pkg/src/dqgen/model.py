"""Question-generation model: characteristic-rich encoder, difficulty-aware
decoder with attention and copy, and beam-search generation.

A difficulty label can enter the computation in exactly two places:
selecting the easy/hard position-embedding table (position_mode "dlph"),
and the decoder initialization (gdc). With both disabled the label cannot
influence the output at all.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import EOS_ID, SOS_ID, UNK_ID, Difficulty
from .errors import ContractError
from .proximity import relative_positions

POSITION_MODES = ("none", "answer", "qwph", "dlph")

# baseline / ablation presets: position mode + global difficulty control
VARIANTS = {
    "l2a": ("none", False),
    "ans": ("answer", False),
    "qwph": ("qwph", False),
    "qwph-gdc": ("qwph", True),
    "dlph": ("dlph", False),
    "dlph-gdc": ("dlph", True),
}


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_w: int = 128          # word embedding size
    d_p: int = 50           # position embedding size
    d_d: int = 10           # global difficulty variable size
    hidden: int = 128       # recurrent size per direction
    max_dist: int = 20      # distance clip for position lookups
    position_mode: str = "dlph"
    gdc: bool = True
    max_decode_len: int = 20
    beam_size: int = 3

    def __post_init__(self):
        for name in ("vocab_size", "d_w", "d_p", "d_d", "hidden", "max_dist",
                     "max_decode_len", "beam_size"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.position_mode not in POSITION_MODES:
            raise ContractError(f"unknown position_mode {self.position_mode!r}")

    @property
    def enc_input_size(self):
        return self.d_w if self.position_mode == "none" else self.d_w + self.d_p

    @property
    def dec_state_size(self):
        return 2 * self.hidden + (self.d_d if self.gdc else 0)

    def to_dict(self):
        return {
            "vocab_size": self.vocab_size, "d_w": self.d_w, "d_p": self.d_p,
            "d_d": self.d_d, "hidden": self.hidden, "max_dist": self.max_dist,
            "position_mode": self.position_mode, "gdc": self.gdc,
            "max_decode_len": self.max_decode_len, "beam_size": self.beam_size,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def variant_config(name, vocab_size, **overrides):
    """Config preset for one of the named model variants."""
    key = name.lower()
    if key not in VARIANTS:
        raise ContractError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")
    mode, gdc = VARIANTS[key]
    return ModelConfig(vocab_size=vocab_size, position_mode=mode, gdc=gdc, **overrides)


def param_shapes(config):
    """Ordered parameter name -> shape map; a pure function of the config.

    Total parameter count is the sum of the shape products (the formula is
    spelled out in the README)."""
    c = config
    h4 = 4 * c.hidden
    d4 = 4 * c.dec_state_size
    shapes = {"word_emb": (c.vocab_size, c.d_w)}
    if c.position_mode == "answer":
        shapes["pos_emb"] = (2, c.d_p)
    elif c.position_mode == "qwph":
        shapes["pos_emb"] = (c.max_dist + 1, c.d_p)
    elif c.position_mode == "dlph":
        shapes["pos_emb_easy"] = (c.max_dist + 1, c.d_p)
        shapes["pos_emb_hard"] = (c.max_dist + 1, c.d_p)
    if c.gdc:
        shapes["diff_emb"] = (2, c.d_d)
    for direction in ("fw", "bw"):
        shapes[f"enc_{direction}_wx"] = (h4, c.enc_input_size)
        shapes[f"enc_{direction}_wh"] = (h4, c.hidden)
        shapes[f"enc_{direction}_b"] = (h4,)
    shapes["dec_wx"] = (d4, c.d_w)
    shapes["dec_wh"] = (d4, c.dec_state_size)
    shapes["dec_b"] = (d4,)
    shapes["attn_w"] = (2 * c.hidden, c.dec_state_size)
    shapes["copy_w"] = (1, c.dec_state_size + 2 * c.hidden + c.d_w)
    shapes["copy_b"] = (1,)
    shapes["out_w"] = (c.vocab_size, c.dec_state_size + 2 * c.hidden)
    shapes["out_b"] = (c.vocab_size,)
    return shapes


def param_count(config):
    return sum(int(np.prod(s)) for s in param_shapes(config).values())


def init_params(config, seed):
    """Fresh learned tensors, uniform(-0.1, 0.1), deterministic given seed."""
    rng = np.random.default_rng(seed)
    return {name: Tensor(rng.uniform(-0.1, 0.1, size=shape), requires_grad=True)
            for name, shape in param_shapes(config).items()}


@dataclass
class EncoderOutput:
    """Per-token states (m x 2H) plus the direction-final state used to
    initialize the decoder."""

    states: Tensor
    states_t: Tensor
    final: Tensor

    @property
    def length(self):
        return self.states.shape[0]


@dataclass
class DecoderState:
    h: Tensor
    c: Tensor


def _position_ids(m, answer_span, difficulty, config):
    if config.position_mode == "none":
        return None, None
    if config.position_mode == "answer":
        s, e = answer_span
        return "pos_emb", [1 if s <= i <= e else 0 for i in range(m)]
    dists = relative_positions(m, answer_span, config.max_dist).distances
    if config.position_mode == "qwph":
        return "pos_emb", list(dists)
    if difficulty is Difficulty.EASY:
        return "pos_emb_easy", list(dists)
    if difficulty is Difficulty.HARD:
        return "pos_emb_hard", list(dists)
    raise ContractError("dlph position mode requires an easy/hard difficulty label")


def _lstm_step(wx, wh, b, x, h, c):
    n = h.size
    gates = ad.add(ad.add(ad.matmul(wx, x), ad.matmul(wh, h)), b)
    i = ad.sigmoid(ad.slice1d(gates, 0, n))
    f = ad.sigmoid(ad.slice1d(gates, n, 2 * n))
    o = ad.sigmoid(ad.slice1d(gates, 2 * n, 3 * n))
    g = ad.tanh(ad.slice1d(gates, 3 * n, 4 * n))
    c_next = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_next = ad.mul(o, ad.tanh(c_next))
    return h_next, c_next


def encode(sentence_ids, answer_span, difficulty, config, params):
    """Run the bidirectional recurrent encoder over one sentence.

    Each input is the word embedding, optionally concatenated with the
    position feature selected by config.position_mode."""
    m = len(sentence_ids)
    word_rows = ad.embedding_lookup(params["word_emb"], sentence_ids)
    table, pos_ids = _position_ids(m, answer_span, difficulty, config)
    if table is None:
        inputs = word_rows
    else:
        inputs = ad.concat([word_rows, ad.embedding_lookup(params[table], pos_ids)], axis=1)

    h = config.hidden
    zeros = Tensor(np.zeros(h))
    fw_states = []
    hf, cf = zeros, zeros
    for i in range(m):
        hf, cf = _lstm_step(params["enc_fw_wx"], params["enc_fw_wh"], params["enc_fw_b"],
                            ad.row(inputs, i), hf, cf)
        fw_states.append(hf)
    bw_states = [None] * m
    hb, cb = zeros, zeros
    for i in range(m - 1, -1, -1):
        hb, cb = _lstm_step(params["enc_bw_wx"], params["enc_bw_wh"], params["enc_bw_b"],
                            ad.row(inputs, i), hb, cb)
        bw_states[i] = hb

    rows = [ad.reshape(ad.concat([fw_states[i], bw_states[i]]), (1, 2 * h)) for i in range(m)]
    states = ad.concat(rows, axis=0)
    final = ad.concat([fw_states[m - 1], bw_states[0]])
    return EncoderOutput(states=states, states_t=ad.transpose(states), final=final)


def init_decoder(enc, difficulty, config, params):
    """Decoder start state: the encoder final state, with the learned
    difficulty variable appended when global difficulty control is on."""
    if config.gdc:
        if difficulty is Difficulty.EASY:
            idx = 0
        elif difficulty is Difficulty.HARD:
            idx = 1
        else:
            raise ContractError("global difficulty control requires an easy/hard label")
        d_vec = ad.reshape(ad.embedding_lookup(params["diff_emb"], [idx]), (config.d_d,))
        h0 = ad.concat([enc.final, d_vec])
    else:
        h0 = enc.final
    return DecoderState(h=h0, c=Tensor(np.zeros(config.dec_state_size)))


def attention(u, enc, params):
    """Bilinear attention over encoder states: weights and context vector."""
    query = ad.matmul(params["attn_w"], u)
    alpha = ad.softmax(ad.matmul(enc.states, query))
    context = ad.matmul(enc.states_t, alpha)
    return context, alpha


def decode_step(state, prev_token_id, enc, source_ext_ids, config, params):
    """One decoder step; returns the next state and the mixed distribution
    over vocabulary plus source out-of-vocabulary slots."""
    feed_id = prev_token_id if prev_token_id < config.vocab_size else UNK_ID
    emb = ad.reshape(ad.embedding_lookup(params["word_emb"], [feed_id]), (config.d_w,))
    h_next, c_next = _lstm_step(params["dec_wx"], params["dec_wh"], params["dec_b"],
                                emb, state.h, state.c)
    context, alpha = attention(h_next, enc, params)

    p_gen = ad.sigmoid(ad.add(ad.matmul(params["copy_w"], ad.concat([h_next, context, emb])),
                              params["copy_b"]))
    vocab_dist = ad.softmax(ad.add(ad.matmul(params["out_w"], ad.concat([h_next, context])),
                                   params["out_b"]))

    n_extended = config.vocab_size + _oov_count(source_ext_ids, config.vocab_size)
    if n_extended > config.vocab_size:
        vocab_dist = ad.concat([vocab_dist, Tensor(np.zeros(n_extended - config.vocab_size))])
    copy_dist = ad.scatter_sum(alpha, source_ext_ids, n_extended)

    one = Tensor(np.ones(1))
    dist = ad.add(ad.mul(p_gen, vocab_dist), ad.mul(ad.sub(one, p_gen), copy_dist))
    return DecoderState(h=h_next, c=c_next), dist


def _oov_count(source_ext_ids, vocab_size):
    return max((i - vocab_size + 1 for i in source_ext_ids if i >= vocab_size), default=0)


@dataclass
class Hypothesis:
    """A partial decode during beam search."""

    tokens: tuple = ()
    log_prob: float = 0.0
    state: DecoderState = None
    finished: bool = False

    def sort_key(self):
        return (-self.log_prob, self.tokens)


def beam_search(example, difficulty, config, params, vocab):
    """Generate a question for `example` under the given difficulty label.

    Length-bounded beam search from SOS; returns the finished hypothesis
    with the highest cumulative log-probability (the best unfinished one if
    nothing finished). Ties break toward the lexicographically smaller
    token-id sequence."""
    with ad.no_grad():
        source_ext_ids, oov = vocab.extended_ids(example.sentence_tokens)
        sentence_ids = [i if i < config.vocab_size else UNK_ID for i in source_ext_ids]
        enc = encode(sentence_ids, example.answer_span, difficulty, config, params)
        state0 = init_decoder(enc, difficulty, config, params)

        beams = [Hypothesis(tokens=(), log_prob=0.0, state=state0, finished=False)]
        finished = []
        for _ in range(config.max_decode_len):
            candidates = []
            for hyp in beams:
                prev = hyp.tokens[-1] if hyp.tokens else SOS_ID
                next_state, dist = decode_step(hyp.state, prev, enc, source_ext_ids,
                                               config, params)
                log_dist = np.log(dist.data + ad.EPS_FLOOR)
                order = np.argsort(-log_dist, kind="stable")[:config.beam_size]
                for token_id in order:
                    token_id = int(token_id)
                    candidates.append(Hypothesis(
                        tokens=hyp.tokens + (token_id,),
                        log_prob=hyp.log_prob + float(log_dist[token_id]),
                        state=next_state,
                        finished=token_id == EOS_ID,
                    ))
            candidates.sort(key=Hypothesis.sort_key)
            beams = []
            for hyp in candidates[:config.beam_size]:
                (finished if hyp.finished else beams).append(hyp)
            if not beams:
                break
        pool = finished if finished else beams
        best = min(pool, key=Hypothesis.sort_key)

    out_tokens = best.tokens[:-1] if best.finished else best.tokens
    return [_extended_token(i, vocab, oov) for i in out_tokens]


def _extended_token(token_id, vocab, oov):
    if token_id < len(vocab):
        return vocab.token(token_id)
    return oov[token_id - len(vocab)]


def generate(example, specified_difficulty, config, params, vocab):
    """Difficulty-control entry point: the specified label need not match
    the example's gold label."""
    return beam_search(example, specified_difficulty, config, params, vocab)
