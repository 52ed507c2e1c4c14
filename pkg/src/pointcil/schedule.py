"""Incremental task schedules and the replay exemplar store.

Task 0 is the base task and keeps every training sample of its classes;
each later task introduces disjoint novel classes with a fixed few-shot
budget.  Class order is authoritative: the caller's list determines both
the base/novel split and the order classes appear in the label space.
The seed only selects which few-shot samples are kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TaskSpec:
    index: int
    classes: tuple
    train: dict  # class -> tuple of sample ids
    test: dict   # class -> tuple of sample ids

    def train_size(self) -> int:
        return sum(len(v) for v in self.train.values())


@dataclass(frozen=True)
class IncrementalSchedule:
    tasks: tuple
    shots: int

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def classes_up_to(self, t: int) -> tuple:
        """All classes seen through task t, in label-space order."""
        if not 0 <= t < len(self.tasks):
            raise ValueError(f"classes_up_to: task {t} out of range 0..{len(self.tasks) - 1}")
        out = []
        for task in self.tasks[: t + 1]:
            out.extend(task.classes)
        return tuple(out)

    @property
    def all_classes(self) -> tuple:
        return self.classes_up_to(len(self.tasks) - 1)

    @property
    def base_classes(self) -> tuple:
        return self.tasks[0].classes


def build_schedule(classes, inventory: dict, base_count: int, tasks: int,
                   shots: int, seed: int = 0) -> IncrementalSchedule:
    """Split classes into a base task plus `tasks` few-shot novel tasks.

    Novel classes per task is (len(classes) - base_count) // tasks; leftover
    classes that do not fill a task are unused.  `inventory` maps each class
    to {"train": [...], "test": [...]} sample ids.
    """
    classes = list(classes)
    if len(set(classes)) != len(classes):
        raise ValueError("build_schedule: duplicate class names")
    if not 1 <= base_count < len(classes):
        raise ValueError(f"build_schedule: base_count {base_count} must be in [1, {len(classes) - 1}]")
    if tasks < 1:
        raise ValueError(f"build_schedule: need at least one incremental task, got {tasks}")
    if shots < 1:
        raise ValueError(f"build_schedule: shots must be >= 1, got {shots}")
    per_task = (len(classes) - base_count) // tasks
    if per_task < 1:
        raise ValueError(
            f"build_schedule: {len(classes) - base_count} novel classes cannot fill {tasks} tasks")
    for name in classes:
        if name not in inventory:
            raise ValueError(f"build_schedule: class {name!r} missing from inventory")

    rng = np.random.Generator(np.random.PCG64(seed))
    specs = []
    base = classes[:base_count]
    specs.append(TaskSpec(
        index=0,
        classes=tuple(base),
        train={c: tuple(sorted(inventory[c]["train"])) for c in base},
        test={c: tuple(sorted(inventory[c]["test"])) for c in base},
    ))
    for t in range(tasks):
        members = classes[base_count + t * per_task : base_count + (t + 1) * per_task]
        train = {}
        for c in members:
            ids = sorted(inventory[c]["train"])
            if len(ids) < shots:
                raise ValueError(f"build_schedule: class {c!r} has {len(ids)} train samples, needs {shots}")
            picked = rng.choice(len(ids), size=shots, replace=False)
            train[c] = tuple(ids[i] for i in sorted(picked))
        specs.append(TaskSpec(
            index=t + 1,
            classes=tuple(members),
            train=train,
            test={c: tuple(sorted(inventory[c]["test"])) for c in members},
        ))

    if specs[0].train_size() <= shots * per_task:
        raise ValueError("build_schedule: base task must hold more training data than an incremental task")
    return IncrementalSchedule(tasks=tuple(specs), shots=shots)


@dataclass
class ExemplarStore:
    """Replay memory: a fixed number of retained sample ids per class."""

    per_class: int = 1
    ids: dict = field(default_factory=dict)

    def add(self, class_name: str, sample_ids) -> None:
        sample_ids = tuple(sample_ids)
        if class_name in self.ids:
            raise RuntimeError(f"ExemplarStore: class {class_name!r} already stored")
        if not 1 <= len(sample_ids) <= self.per_class:
            raise ValueError(
                f"ExemplarStore: class {class_name!r} got {len(sample_ids)} exemplars, budget {self.per_class}")
        self.ids[class_name] = sample_ids

    def classes(self) -> tuple:
        return tuple(self.ids)

    def total(self) -> int:
        return sum(len(v) for v in self.ids.values())

    def pairs(self):
        """Flat (class_name, sample_id) list in insertion order."""
        return [(c, s) for c, sids in self.ids.items() for s in sids]
