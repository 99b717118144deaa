"""Command-line pipeline: synth | label | stats | train | generate | eval | gradcheck.

Every subcommand accepts --config FILE, a key = value text file mirroring
the model/training/paths knobs; explicit flags override file values and
the effective configuration is echoed for reproducibility. Errors print a
machine-parsable first line (dqgen-error: {...}) followed by a human one.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import reports
from .data import (Difficulty, build_vocab, generate_synthetic_corpus,
                   load_jsonl, save_jsonl, tokenize)
from .errors import ContractError, DqgenError, ParseError
from .gradcheck import composite_check, per_op_checks
from .labeling import apply_labels, builtin_readers, label_dataset
from .metrics import (GenerationRecord, answer_occurrence_rate, corpus_bleu,
                      gap_from_records, rouge_l, score_generations)
from .model import VARIANTS, ModelConfig, generate, variant_config
from .proximity import corpus_proximity_stats
from .training import (TrainConfig, load_checkpoint, save_checkpoint, train)

MODEL_KEYS = {
    "variant": str, "d_w": int, "d_p": int, "d_d": int, "hidden": int,
    "max_dist": int, "max_decode_len": int, "beam_size": int, "min_freq": int,
}
TRAIN_KEYS = {
    "learning_rate": float, "beta1": float, "beta2": float, "adam_eps": float,
    "clip_norm": float, "batch_size": int, "max_epochs": int, "patience": int,
}

MODEL_DEFAULTS = {"variant": "dlph-gdc", "d_w": 128, "d_p": 50, "d_d": 10,
                  "hidden": 128, "max_dist": 20, "max_decode_len": 20,
                  "beam_size": 3, "min_freq": 1}
TRAIN_DEFAULTS = {"learning_rate": 1e-3, "beta1": 0.9, "beta2": 0.999,
                  "adam_eps": 1e-8, "clip_norm": 5.0, "batch_size": 16,
                  "max_epochs": 30, "patience": 10}


def parse_config_file(path):
    """key = value lines; '#' starts a comment; blank lines ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"config {path}, line {lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip().lower()] = value.strip()
    return values


def _resolve(args, file_cfg, keys, defaults):
    out = {}
    for key, cast in keys.items():
        flag = getattr(args, key, None)
        if flag is not None:
            out[key] = flag
        elif key in file_cfg:
            raw = file_cfg[key]
            out[key] = raw.lower() in ("true", "1", "yes") if cast is bool else cast(raw)
        else:
            out[key] = defaults[key]
    return out


def _file_cfg(args):
    return parse_config_file(args.config) if getattr(args, "config", None) else {}


def _resolve_seed(args, file_cfg):
    if args.seed is not None:
        return args.seed
    return int(file_cfg.get("seed", 0))


def _echo(effective):
    print("effective-config: " + json.dumps(effective, sort_keys=True))


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_synth(args):
    file_cfg = _file_cfg(args)
    seed = _resolve_seed(args, file_cfg)
    effective = {"n": args.n, "seed": seed, "easy_max_dist": args.easy_max_dist,
                 "hard_min_dist": args.hard_min_dist, "out": str(args.out)}
    _echo(effective)
    corpus = generate_synthetic_corpus(args.n, seed, args.easy_max_dist, args.hard_min_dist)
    save_jsonl(corpus, args.out)
    easy = sum(1 for ex in corpus if ex.difficulty is Difficulty.EASY)
    print(f"wrote {len(corpus)} examples ({easy} easy / {len(corpus) - easy} hard) to {args.out}")
    return 0


def cmd_label(args):
    file_cfg = _file_cfg(args)
    seed = _resolve_seed(args, file_cfg)
    _echo({"data": str(args.data), "k": args.k, "seed": seed,
           "out": str(args.out), "report": str(args.report)})
    examples = load_jsonl(args.data)
    report = label_dataset(examples, builtin_readers(), k=args.k, seed=seed)
    save_jsonl(apply_labels(examples, report), args.out)
    _write_json(report.to_dict(), args.report)
    print(f"labeled {len(examples)} examples: {report.counts} -> {args.out}")
    return 0


def cmd_stats(args):
    _echo({"data": str(args.data), "out": str(args.out), "figures": args.figures})
    examples = load_jsonl(args.data)
    stats = corpus_proximity_stats(examples)
    _write_json(stats.to_dict(), args.out)
    base = Path(args.out)
    reports.stats_csv(stats, base.with_suffix(".csv"))
    if args.figures:
        reports.stats_figure(stats, base.with_suffix(".png"))
    print(f"distance statistics for {len(examples)} examples -> {args.out}")
    return 0


def _train_splits(args, seed):
    if args.train and args.dev:
        return load_jsonl(args.train), load_jsonl(args.dev)
    if args.data:
        examples = load_jsonl(args.data)
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(examples))
        n_dev = max(1, int(round(args.dev_frac * len(examples))))
        dev = [examples[i] for i in order[:n_dev]]
        train_set = [examples[i] for i in order[n_dev:]]
        return train_set, dev
    raise ContractError("train needs either --train and --dev, or --data [--dev-frac]")


def cmd_train(args):
    file_cfg = _file_cfg(args)
    seed = _resolve_seed(args, file_cfg)
    model_opts = _resolve(args, file_cfg, MODEL_KEYS, MODEL_DEFAULTS)
    train_opts = _resolve(args, file_cfg, TRAIN_KEYS, TRAIN_DEFAULTS)

    train_set, dev_set = _train_splits(args, seed)
    vocab = build_vocab(train_set, min_freq=model_opts.pop("min_freq"))
    variant = model_opts.pop("variant")
    model_cfg = variant_config(variant, vocab_size=len(vocab), **model_opts)
    train_cfg = TrainConfig(seed=seed, **train_opts)

    effective = {"variant": variant, "seed": seed, "ckpt": str(args.ckpt),
                 "model": model_cfg.to_dict(), "train": train_cfg.to_dict(),
                 "n_train": len(train_set), "n_dev": len(dev_set)}
    _echo(effective)

    ckpt, history = train(train_set, dev_set, model_cfg, train_cfg, vocab)
    save_checkpoint(ckpt, args.ckpt)
    log_path = Path(args.log) if args.log else Path(args.ckpt).with_suffix(".log.jsonl")
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"effective_config": effective}, sort_keys=True) + "\n")
        for entry in history:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    if args.figures:
        reports.training_curves(history, log_path.with_suffix(".png"))
    print(f"best checkpoint: epoch {ckpt.epoch}, dev perplexity "
          f"{ckpt.dev_perplexity:.4f} -> {args.ckpt}")
    return 0


def cmd_generate(args):
    _echo({"ckpt": str(args.ckpt), "data": str(args.data),
           "difficulty": args.difficulty, "out": str(args.out)})
    ckpt = load_checkpoint(args.ckpt)
    examples = load_jsonl(args.data)
    with open(args.out, "w", encoding="utf-8") as fh:
        for ex in examples:
            if args.difficulty == "gold":
                label = ex.difficulty
            elif args.difficulty == "reversed":
                label = ex.difficulty.flipped()
            else:
                label = Difficulty(args.difficulty)
            if not label.labeled:
                raise ContractError(f"example {ex.id} is unlabeled; "
                                    f"--difficulty {args.difficulty} needs labels")
            question = generate(ex, label, ckpt.model_config, ckpt.params, ckpt.vocab)
            fh.write(json.dumps({"id": ex.id, "label_used": label.value,
                                 "question": " ".join(question)}, sort_keys=True) + "\n")
    print(f"generated {len(examples)} questions ({args.difficulty} labels) -> {args.out}")
    return 0


def _load_generations(path, examples_by_id):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                ex_id, label, question = obj["id"], obj["label_used"], obj["question"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise ParseError(f"generations line {lineno}: {exc}") from exc
            if ex_id not in examples_by_id:
                raise ContractError(f"generations line {lineno}: unknown example id {ex_id!r}")
            ex = examples_by_id[ex_id]
            records.append(GenerationRecord(
                example_id=ex_id,
                label_used=Difficulty(label),
                question_tokens=tuple(tokenize(question)),
                gold_question_tokens=ex.question_tokens,
                gold_answer_text=ex.answer_text,
            ))
    return records


def cmd_eval(args):
    _echo({"data": str(args.data), "generations": str(args.generations),
           "train": str(args.train) if args.train else None,
           "out": str(args.out), "figures": args.figures})
    examples = load_jsonl(args.data)
    examples_by_id = {ex.id: ex for ex in examples}
    records = _load_generations(args.generations, examples_by_id)
    if not records:
        raise ContractError("generations file is empty")

    true_records = [r for r in records
                    if examples_by_id[r.example_id].difficulty is r.label_used]
    reversed_records = [
        r for r in records
        if examples_by_id[r.example_id].difficulty.labeled
        and r.label_used is examples_by_id[r.example_id].difficulty.flipped()]

    quality_basis = true_records if true_records else records
    candidates = [list(r.question_tokens) for r in quality_basis]
    references = [list(r.gold_question_tokens) for r in quality_basis]
    report = {
        "counts": {"records": len(records), "true_label": len(true_records),
                   "reversed_label": len(reversed_records)},
        "quality": {
            "bleu": corpus_bleu(candidates, references),
            "rouge_l": rouge_l(candidates, references),
            "candidates": len(candidates),
            "basis": "true-label records" if true_records else "all records",
        },
        "answer_occurrence_rate": answer_occurrence_rate(records),
    }

    if args.train:
        train_set = load_jsonl(args.train)
        n_dev = max(1, len(train_set) // 10)
        readers = [r.fit(train_set[:-n_dev], train_set[-n_dev:]) for r in builtin_readers()]
        if true_records:
            eval_examples = [examples_by_id[r.example_id] for r in true_records]
            scores = score_generations(true_records, eval_examples, readers)
            report["difficulty"] = {name: {s: vars(cell) for s, cell in strata.items()}
                                    for name, strata in scores.items()}
        if true_records and reversed_records:
            gap_ids = ({r.example_id for r in true_records}
                       & {r.example_id for r in reversed_records})
            gap = gap_from_records(
                [r for r in true_records if r.example_id in gap_ids],
                [r for r in reversed_records if r.example_id in gap_ids],
                [examples_by_id[i] for i in gap_ids], readers)
            report["reversed_gap"] = gap.to_dict()

    _write_json(report, args.out)
    base = Path(args.out)
    reports.eval_csv(report, base.with_suffix(".csv"))
    if args.figures:
        reports.eval_quality_figure(report, base.with_name(base.stem + "_quality.png"))
        if "difficulty" in report:
            reports.eval_difficulty_figure(report, base.with_name(base.stem + "_difficulty.png"))
    print(f"evaluated {len(records)} generations -> {args.out}")
    return 0


def cmd_gradcheck(args):
    file_cfg = _file_cfg(args)
    seed = _resolve_seed(args, file_cfg)
    _echo({"seed": seed})
    ok = True
    op_errors = per_op_checks(seed=seed)
    for name, err in sorted(op_errors.items()):
        status = "ok" if err < 1e-6 else "FAIL"
        ok &= err < 1e-6
        print(f"op {name:<18} max_rel_error {err:.3e} {status}")
    comp_errors = composite_check(seed=seed)
    worst = max(comp_errors.values())
    for name, err in sorted(comp_errors.items(), key=lambda kv: -kv[1]):
        print(f"composite {name:<14} max_rel_error {err:.3e}")
    ok &= worst < 1e-4
    print(f"gradcheck {'PASS' if ok else 'FAIL'}: per-op worst "
          f"{max(op_errors.values()):.3e} (< 1e-6), composite worst {worst:.3e} (< 1e-4)")
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dqgen",
        description="Difficulty-controllable question generation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file; flags override it")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--easy-max-dist", type=int, default=2)
    p.add_argument("--hard-min-dist", type=int, default=6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("label", help="run the k-fold difficulty labeling protocol")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=9)
    p.add_argument("--out", required=True, help="labeled JSONL (dropped -> null)")
    p.add_argument("--report", required=True, help="JSON labeling report")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("stats", help="hint-word distance statistics")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="JSON report (CSV/PNG written alongside)")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="teacher-forced training")
    common(p)
    p.add_argument("--train", help="training JSONL")
    p.add_argument("--dev", help="validation JSONL")
    p.add_argument("--data", help="single JSONL to split with --dev-frac")
    p.add_argument("--dev-frac", type=float, default=0.1)
    p.add_argument("--variant", choices=sorted(VARIANTS), default=None)
    for key in ("d_w", "d_p", "d_d", "hidden", "max_dist", "max_decode_len",
                "beam_size", "min_freq"):
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=int, default=None)
    for key, cast in TRAIN_KEYS.items():
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=cast, default=None)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--log", help="training log JSONL (default: next to --ckpt)")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate questions from a checkpoint")
    common(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--difficulty", choices=("gold", "reversed", "easy", "hard"),
                   default="gold")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score a generations file against its dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--generations", required=True)
    p.add_argument("--train", help="training JSONL for fitting the reader oracles")
    p.add_argument("--out", required=True)
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DqgenError as exc:
        _fail(exc.code, str(exc))
    except FileNotFoundError as exc:
        _fail("missing-file", f"{exc.filename}: file not found")
    except (ValueError, IndexError) as exc:
        _fail("invalid-value", str(exc))
    return 1


def _fail(code, message):
    print("dqgen-error: " + json.dumps({"code": code, "message": message},
                                       sort_keys=True), file=sys.stderr)
    print(f"error ({code}): {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
