"""Gradient verification: per-op finite-difference checks and a composite
check through encode -> decoder init -> three copy decode steps -> loss.

Used by both the test suite and the `gradcheck` CLI subcommand.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import SOS_ID, UNK_ID, Difficulty
from .model import ModelConfig, decode_step, encode, init_decoder, init_params


def per_op_checks(seed=0, eps=1e-6):
    """Worst relative finite-difference error per differentiable op."""
    rng = np.random.default_rng(seed)
    vec = rng.normal(size=6)
    mat = rng.normal(size=(3, 4))
    other_vec = Tensor(rng.normal(size=6))
    other_mat = Tensor(rng.normal(size=(4, 2)))
    table = rng.normal(size=(5, 3))
    dist = np.abs(rng.normal(size=5))
    dist = dist / dist.sum()

    def quad(t):
        return ad.tsum(ad.mul(t, t))

    checks = {
        "add": (vec, lambda x: quad(ad.add(x, other_vec))),
        "sub": (vec, lambda x: quad(ad.sub(x, other_vec))),
        "mul": (vec, lambda x: quad(ad.mul(x, other_vec))),
        "tanh": (vec, lambda x: quad(ad.tanh(x))),
        "sigmoid": (vec, lambda x: quad(ad.sigmoid(x))),
        "matmul": (mat, lambda x: quad(ad.matmul(x, other_mat))),
        "concat": (vec, lambda x: quad(ad.concat([x, other_vec]))),
        "softmax": (vec, lambda x: quad(ad.softmax(x))),
        "embedding_lookup": (table, lambda x: quad(ad.embedding_lookup(x, [0, 2, 2, 4]))),
        "scatter_sum": (vec, lambda x: quad(ad.scatter_sum(x, [0, 3, 1, 3, 2, 0], 4))),
        "slice1d": (vec, lambda x: quad(ad.slice1d(x, 1, 5))),
        "row": (mat, lambda x: quad(ad.row(x, 1))),
        "transpose": (mat, lambda x: quad(ad.transpose(x))),
        "reshape": (mat, lambda x: quad(ad.reshape(x, (4, 3)))),
        "nll_loss": (dist, lambda x: ad.nll_loss(ad.softmax(x), 2)),
    }
    return {name: ad.grad_check(fn, Tensor(x0), eps=eps) for name, (x0, fn) in checks.items()}


def composite_config():
    """Tiny dimensions keep the coordinate-wise check fast."""
    return ModelConfig(vocab_size=8, d_w=4, d_p=3, d_d=2, hidden=5, max_dist=4,
                       position_mode="dlph", gdc=True, max_decode_len=4, beam_size=1)


def composite_check(seed=0, eps=1e-3):
    """Finite-difference check of the full model graph w.r.t. every
    parameter; returns {param name: worst relative error}.

    The probe input includes one out-of-vocabulary source token so the copy
    path (attention scatter and extended distribution) is on the graph.
    eps defaults to 1e-3: some parameters have gradients around 1e-9 while
    the loss is O(1), so smaller steps leave the central difference with
    too few significant digits (cancellation noise scales like 1/eps)."""
    config = composite_config()
    params = init_params(config, seed)
    source_ext_ids = [4, 8, 5, 6]   # id 8 is a source OOV slot
    answer_span = (1, 1)
    targets = [5, 8, 7]             # includes the OOV target -> copy loss path
    sentence_ids = [i if i < config.vocab_size else UNK_ID for i in source_ext_ids]

    def loss_for(current):
        enc = encode(sentence_ids, answer_span, Difficulty.EASY, config, current)
        state = init_decoder(enc, Difficulty.EASY, config, current)
        prev = SOS_ID
        total = None
        for target in targets:
            state, dist = decode_step(state, prev, enc, source_ext_ids, config, current)
            step = ad.nll_loss(dist, target)
            total = step if total is None else ad.add(total, step)
            prev = target
        return total

    errors = {}
    for name in params:
        def fn(probe, _name=name):
            current = dict(params)
            current[_name] = probe
            return loss_for(current)

        errors[name] = ad.grad_check(fn, params[name], eps=eps)
    return errors
