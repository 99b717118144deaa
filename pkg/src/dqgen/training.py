"""Teacher-forced training, perplexity-based model selection, checkpoints."""

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import EOS_ID, SOS_ID, UNK_ID, Vocab
from .errors import (CheckpointManifestError, CheckpointTruncatedError,
                     CheckpointVersionError, ContractError, TrainingError)
from .model import ModelConfig, decode_step, encode, init_decoder, init_params, param_shapes

CHECKPOINT_MAGIC = "dqgen-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 5.0
    batch_size: int = 16
    max_epochs: int = 30
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("learning_rate", "beta1", "beta2", "adam_eps", "clip_norm",
                     "batch_size", "max_epochs", "patience"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive")

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "learning_rate", "beta1", "beta2", "adam_eps", "clip_norm",
            "batch_size", "max_epochs", "patience", "seed")}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _label_consumed(config):
    return config.gdc or config.position_mode == "dlph"


def teacher_forced_loss(example, config, params, vocab):
    """Length-normalized NLL of the gold question under gold-label decoding.

    At each step the decoder is fed the gold previous token; targets live in
    the extended (vocabulary + source OOV) id space."""
    if _label_consumed(config) and not example.difficulty.labeled:
        raise ContractError(f"example {example.id} is unlabeled but this model "
                            "variant consumes difficulty labels")
    source_ext_ids, oov = vocab.extended_ids(example.sentence_tokens)
    sentence_ids = [i if i < config.vocab_size else UNK_ID for i in source_ext_ids]
    enc = encode(sentence_ids, example.answer_span, example.difficulty, config, params)
    state = init_decoder(enc, example.difficulty, config, params)

    oov_base = len(vocab)
    targets = []
    for tok in example.question_tokens:
        if tok in vocab:
            targets.append(vocab.id(tok))
        elif tok in oov:
            targets.append(oov_base + oov.index(tok))
        else:
            targets.append(UNK_ID)
    targets.append(EOS_ID)
    prevs = [SOS_ID] + targets[:-1]

    total = None
    for prev, target in zip(prevs, targets):
        state, dist = decode_step(state, prev, enc, source_ext_ids, config, params)
        step_loss = ad.nll_loss(dist, target)
        total = step_loss if total is None else ad.add(total, step_loss)
    return ad.mul(total, Tensor(np.asarray(1.0 / len(targets))))


def perplexity(dataset, config, params, vocab):
    """exp of the corpus mean per-token teacher-forced loss."""
    if not dataset:
        raise ContractError("perplexity of an empty dataset is undefined")
    total_loss = 0.0
    total_tokens = 0
    with ad.no_grad():
        for ex in dataset:
            n = len(ex.question_tokens) + 1  # + EOS
            total_loss += teacher_forced_loss(ex, config, params, vocab).item() * n
            total_tokens += n
    return float(np.exp(total_loss / total_tokens))


def clip_gradients(params, max_norm):
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the pre-clip norm."""
    sq = 0.0
    for p in params.values():
        if p.grad is not None:
            sq += float((p.grad * p.grad).sum())
    norm = float(np.sqrt(sq))
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


class Adam:
    """Standard Adam with bias correction, applied in parameter-name order."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, params):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            if p.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (p.grad * p.grad)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class Checkpoint:
    """Serializable snapshot of a trained model."""

    model_config: ModelConfig
    vocab: Vocab
    params: dict
    epoch: int = 0
    dev_perplexity: float = float("inf")
    format_version: int = CHECKPOINT_VERSION


def train(train_set, dev_set, model_config, train_config, vocab):
    """Adam training with teacher forcing; keeps the checkpoint with the
    lowest dev perplexity. Returns (checkpoint, history), history being one
    dict per epoch: epoch, train_loss, dev_perplexity."""
    if not train_set:
        raise ContractError("training set is empty")
    if not dev_set:
        raise ContractError("dev set is empty")

    params = init_params(model_config, train_config.seed)
    optimizer = Adam(params, lr=train_config.learning_rate, beta1=train_config.beta1,
                     beta2=train_config.beta2, eps=train_config.adam_eps)
    rng = np.random.default_rng(train_config.seed)

    best = None
    best_ppl = float("inf")
    best_epoch = -1
    bad_epochs = 0
    history = []

    order = np.arange(len(train_set))
    for epoch in range(1, train_config.max_epochs + 1):
        rng.shuffle(order)
        epoch_loss = 0.0
        for batch_idx, start in enumerate(range(0, len(order), train_config.batch_size)):
            batch = [train_set[i] for i in order[start:start + train_config.batch_size]]
            for p in params.values():
                p.zero_grad()
            batch_loss = 0.0
            try:
                for ex in batch:
                    loss = teacher_forced_loss(ex, model_config, params, vocab)
                    loss.backward()
                    batch_loss += loss.item()
            except ValueError as exc:
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}: {exc}") from exc
            inv = 1.0 / len(batch)
            for p in params.values():
                if p.grad is not None:
                    p.grad *= inv
            clip_gradients(params, train_config.clip_norm)
            optimizer.step(params)
            epoch_loss += batch_loss
        dev_ppl = perplexity(dev_set, model_config, params, vocab)
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / len(train_set),
            "dev_perplexity": dev_ppl,
        })
        if dev_ppl < best_ppl:
            best_ppl = dev_ppl
            best_epoch = epoch
            best = {k: p.data.copy() for k, p in params.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= train_config.patience:
                break

    ckpt_params = {k: Tensor(v, requires_grad=True) for k, v in best.items()}
    return Checkpoint(model_config=model_config, vocab=vocab, params=ckpt_params,
                      epoch=best_epoch, dev_perplexity=best_ppl), history


def save_checkpoint(ckpt, path):
    """Textual header (version, config, vocab, parameter manifest) followed
    by the flat little-endian float64 parameter arrays in manifest order."""
    manifest = []
    offset = 0
    blobs = []
    for name in param_shapes(ckpt.model_config):
        arr = np.ascontiguousarray(ckpt.params[name].data, dtype="<f8")
        blob = arr.tobytes()
        manifest.append({"name": name, "shape": list(arr.shape),
                         "offset": offset, "count": int(arr.size)})
        offset += len(blob)
        blobs.append(blob)
    header = {
        "model_config": ckpt.model_config.to_dict(),
        "vocab": ckpt.vocab.to_dict(),
        "manifest": manifest,
        "meta": {"epoch": ckpt.epoch, "dev_perplexity": ckpt.dev_perplexity},
    }
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {ckpt.format_version}\n".encode())
        fh.write(json.dumps(header, sort_keys=True).encode())
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic_line = fh.readline().decode("utf-8", errors="replace").rstrip("\n")
        parts = magic_line.split()
        if len(parts) != 2 or parts[0] != CHECKPOINT_MAGIC:
            raise CheckpointVersionError(f"not a checkpoint file: {magic_line!r}")
        if parts[1] != str(CHECKPOINT_VERSION):
            raise CheckpointVersionError(
                f"unsupported checkpoint version {parts[1]} (expected {CHECKPOINT_VERSION})")
        try:
            header = json.loads(fh.readline().decode())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CheckpointManifestError(f"unreadable checkpoint header: {exc}") from exc
        blob = fh.read()

    config = ModelConfig.from_dict(header["model_config"])
    expected = param_shapes(config)
    manifest = header["manifest"]
    if [m["name"] for m in manifest] != list(expected):
        raise CheckpointManifestError("manifest parameter names do not match the config")

    params = {}
    for entry in manifest:
        shape = tuple(entry["shape"])
        if shape != expected[entry["name"]]:
            raise CheckpointManifestError(
                f"parameter {entry['name']} has shape {shape}, expected {expected[entry['name']]}")
        if int(np.prod(shape)) != entry["count"]:
            raise CheckpointManifestError(
                f"parameter {entry['name']} count {entry['count']} does not match shape {shape}")
        start = entry["offset"]
        end = start + entry["count"] * 8
        if end > len(blob):
            raise CheckpointTruncatedError(
                f"checkpoint ends before parameter {entry['name']} "
                f"(need {end} bytes, have {len(blob)})")
        arr = np.frombuffer(blob[start:end], dtype="<f8").reshape(shape).copy()
        params[entry["name"]] = Tensor(arr, requires_grad=True)

    return Checkpoint(
        model_config=config,
        vocab=Vocab.from_dict(header["vocab"]),
        params=params,
        epoch=header["meta"]["epoch"],
        dev_perplexity=header["meta"]["dev_perplexity"],
    )
