"""Incremental-learning metrics and the CSV report format.

Accuracies are percentages in [0, 100], one per task, in task order.  The
summary metrics are the plain mean over all tasks and the mean relative
drop between consecutive tasks (also expressed in percent).
"""

from __future__ import annotations

import csv
from decimal import Decimal, ROUND_HALF_UP
from typing import Sequence


def avg_accuracy(accs: Sequence[float]) -> float:
    """Mean accuracy over every task, the base task included."""
    if len(accs) == 0:
        raise ValueError("avg_accuracy: empty accuracy list")
    return float(sum(accs)) / len(accs)


def forgetting(accs: Sequence[float]) -> float:
    """Mean relative accuracy drop between consecutive tasks, in percent.

    Each step contributes |a_t - a_{t+1}| / a_t; the mean over the T-1
    steps is scaled by 100.  Any zero a_t with t < T-1 makes the ratio
    undefined and is rejected.
    """
    if len(accs) < 2:
        raise ValueError("forgetting: need at least two task accuracies")
    total = 0.0
    for t in range(len(accs) - 1):
        if accs[t] == 0:
            raise ValueError(f"forgetting: zero accuracy at task {t} makes the ratio undefined")
        total += abs(accs[t] - accs[t + 1]) / accs[t]
    return 100.0 * total / (len(accs) - 1)


def round_half_up(x: float, ndigits: int = 1) -> float:
    """Round with ties away from zero (0.25 -> 0.3), not banker's rounding."""
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def display(x: float) -> str:
    """One-decimal display string used in report footers and CLI output."""
    return f"{round_half_up(x, 1):.1f}"


def write_report(rows: Sequence[tuple[int, int, float]], path) -> None:
    """Write per-task accuracies as CSV with AA / delta_A footer rows.

    Rows are (task_index, num_classes, acc).  Accuracies are written full
    precision so they round-trip; the footer metrics are display-rounded
    to one decimal.
    """
    if len(rows) == 0:
        raise ValueError("write_report: no rows")
    accs = [acc for _, _, acc in rows]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["task_index", "num_classes", "acc"])
        for task_index, num_classes, acc in rows:
            writer.writerow([task_index, num_classes, repr(float(acc))])
        writer.writerow(["AA", display(avg_accuracy(accs))])
        if len(accs) >= 2:
            writer.writerow(["delta_A", display(forgetting(accs))])


def read_report(path) -> tuple[list[tuple[int, int, float]], dict]:
    """Read a report CSV back into (rows, footer dict)."""
    rows = []
    footer = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["task_index", "num_classes", "acc"]:
            raise ValueError(f"read_report: unexpected header {header!r}")
        for record in reader:
            if not record:
                continue
            if record[0] in ("AA", "delta_A"):
                footer[record[0]] = float(record[1])
            else:
                rows.append((int(record[0]), int(record[1]), float(record[2])))
    if not rows:
        raise ValueError("read_report: no task rows")
    return rows, footer
