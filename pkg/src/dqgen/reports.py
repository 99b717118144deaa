"""Figure and CSV rendering for the report-producing CLI subcommands.

Every report command writes its machine-readable output (JSON / JSONL)
plus a small CSV table and PNG figures next to it; figures are rendered
with the Agg backend so the CLI works headless.
"""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def stats_csv(stats, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["measure", "stratum", "value", "count"])
        writer.writerow(["avg_question_word_distance", "easy",
                         stats.avg_qword_dist_easy, stats.count_easy])
        writer.writerow(["avg_question_word_distance", "hard",
                         stats.avg_qword_dist_hard, stats.count_hard])
        writer.writerow(["avg_question_word_distance", "all",
                         stats.avg_qword_dist_all, stats.count_all])
        writer.writerow(["avg_sentence_word_distance", "all",
                         stats.avg_sentword_dist, stats.count_sent])


def stats_figure(stats, path):
    labels = ["easy\n(question words)", "hard\n(question words)",
              "all\n(question words)", "all\n(sentence words)"]
    values = [stats.avg_qword_dist_easy, stats.avg_qword_dist_hard,
              stats.avg_qword_dist_all, stats.avg_sentword_dist]
    values = [v if v is not None else 0.0 for v in values]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    bars = ax.bar(labels, values, color=["#4c9f70", "#c1574f", "#6187b5", "#999999"])
    ax.bar_label(bars, fmt="%.2f")
    ax.set_ylabel("avg token distance to answer")
    ax.set_title("Hint-word distance statistics")
    _save(fig, path)


def training_curves(history, path):
    epochs = [h["epoch"] for h in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.plot(epochs, [h["train_loss"] for h in history], marker=".")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss / token")
    ax2.plot(epochs, [h["dev_perplexity"] for h in history], marker=".", color="#c1574f")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("dev perplexity")
    fig.suptitle("Training progress")
    _save(fig, path)


def eval_csv(report, path):
    rows = []
    quality = report.get("quality")
    if quality:
        for n, score in enumerate(quality["bleu"], start=1):
            rows.append([f"bleu-{n}", "", "", score])
        rows.append(["rouge-l", "", "", quality["rouge_l"]])
    if report.get("answer_occurrence_rate") is not None:
        rows.append(["answer_occurrence_rate", "", "", report["answer_occurrence_rate"]])
    for reader, strata in report.get("difficulty", {}).items():
        for stratum, cell in strata.items():
            rows.append(["reader_em", reader, stratum, cell["em"]])
            rows.append(["reader_f1", reader, stratum, cell["f1"]])
    for reader, strata in report.get("reversed_gap", {}).items():
        for stratum, cell in strata.items():
            rows.append(["em_gap", reader, stratum, cell["em_gap"]])
            rows.append(["f1_gap", reader, stratum, cell["f1_gap"]])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "reader", "stratum", "value"])
        writer.writerows(rows)


def eval_quality_figure(report, path):
    quality = report["quality"]
    names = [f"BLEU-{n}" for n in range(1, len(quality["bleu"]) + 1)] + ["ROUGE-L"]
    values = [100 * b for b in quality["bleu"]] + [100 * quality["rouge_l"]]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    bars = ax.bar(names, values, color="#6187b5")
    ax.bar_label(bars, fmt="%.1f")
    ax.set_ylabel("score")
    ax.set_ylim(0, 105)
    ax.set_title("Question quality vs gold (true labels)")
    _save(fig, path)


def eval_difficulty_figure(report, path):
    difficulty = report.get("difficulty", {})
    gap = report.get("reversed_gap", {})
    readers = sorted(difficulty)
    fig, axes = plt.subplots(1, 2 if gap else 1, figsize=(9 if gap else 5, 3.4),
                             squeeze=False)
    ax = axes[0][0]
    width = 0.35
    for offset, stratum, color in ((0, "easy", "#4c9f70"), (width, "hard", "#c1574f")):
        xs = [i + offset for i in range(len(readers))]
        ax.bar(xs, [difficulty[r][stratum]["em"] for r in readers], width,
               label=f"{stratum} set", color=color)
    ax.set_xticks([i + width / 2 for i in range(len(readers))])
    ax.set_xticklabels(readers)
    ax.set_ylabel("reader EM (%), true labels")
    ax.set_ylim(0, 105)
    ax.legend()
    ax.set_title("Difficulty of generated questions")
    if gap:
        ax2 = axes[0][1]
        for offset, stratum, color in ((0, "easy", "#4c9f70"), (width, "hard", "#c1574f")):
            xs = [i + offset for i in range(len(readers))]
            ax2.bar(xs, [gap[r][stratum]["em_gap"] for r in readers], width,
                    label=f"{stratum} set", color=color)
        ax2.set_xticks([i + width / 2 for i in range(len(readers))])
        ax2.set_xticklabels(readers)
        ax2.set_ylabel("EM gap (true - reversed), points")
        ax2.legend()
        ax2.set_title("Reversed-label control gap")
    _save(fig, path)
