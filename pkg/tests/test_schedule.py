import pytest

from pointcil.schedule import ExemplarStore, build_schedule


def _inventory(classes, n_train=8, n_test=4):
    return {
        c: {
            "train": [f"train_{i:03d}" for i in range(n_train)],
            "test": [f"test_{i:03d}" for i in range(n_test)],
        }
        for c in classes
    }


CLASSES = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel"]


def test_basic_split():
    sched = build_schedule(CLASSES, _inventory(CLASSES), base_count=4, tasks=2, shots=3)
    assert sched.num_tasks == 3
    assert sched.base_classes == ("alpha", "bravo", "charlie", "delta")
    assert sched.tasks[1].classes == ("echo", "foxtrot")
    assert sched.tasks[2].classes == ("golf", "hotel")
    assert sched.all_classes == tuple(CLASSES)
    assert sched.classes_up_to(1) == tuple(CLASSES[:6])


def test_class_sets_disjoint_and_ordered():
    sched = build_schedule(CLASSES, _inventory(CLASSES), base_count=4, tasks=2, shots=3)
    seen = []
    for task in sched.tasks:
        for c in task.classes:
            assert c not in seen
            seen.append(c)
    # label-space order is the caller's class order, never shuffled
    assert seen == CLASSES


def test_base_keeps_everything_novel_keeps_shots():
    inv = _inventory(CLASSES, n_train=8)
    sched = build_schedule(CLASSES, inv, base_count=4, tasks=2, shots=3)
    for c in sched.base_classes:
        assert sched.tasks[0].train[c] == tuple(inv[c]["train"])
    for task in sched.tasks[1:]:
        for c in task.classes:
            picked = task.train[c]
            assert len(picked) == 3
            assert len(set(picked)) == 3
            assert set(picked) <= set(inv[c]["train"])
            assert list(picked) == sorted(picked)
            # test split is never subsampled
            assert task.test[c] == tuple(inv[c]["test"])


def test_seed_controls_only_the_shot_choice():
    inv = _inventory(CLASSES)
    a = build_schedule(CLASSES, inv, base_count=4, tasks=2, shots=3, seed=0)
    b = build_schedule(CLASSES, inv, base_count=4, tasks=2, shots=3, seed=0)
    c = build_schedule(CLASSES, inv, base_count=4, tasks=2, shots=3, seed=1)
    assert a == b
    assert c.base_classes == a.base_classes
    assert [t.classes for t in c.tasks] == [t.classes for t in a.tasks]
    picks = lambda s: [t.train for t in s.tasks[1:]]
    assert picks(c) != picks(a)


def test_leftover_classes_are_dropped():
    classes = CLASSES + ["india"]
    sched = build_schedule(classes, _inventory(classes), base_count=4, tasks=2, shots=3)
    # 5 novel classes, 2 per task: india does not fit and is unused
    assert "india" not in sched.all_classes


def test_build_schedule_errors():
    inv = _inventory(CLASSES)
    with pytest.raises(ValueError, match="duplicate"):
        build_schedule(["a", "a", "b"], _inventory(["a", "b"]), 1, 1, 1)
    with pytest.raises(ValueError, match="base_count"):
        build_schedule(CLASSES, inv, base_count=0, tasks=2, shots=3)
    with pytest.raises(ValueError, match="base_count"):
        build_schedule(CLASSES, inv, base_count=8, tasks=2, shots=3)
    with pytest.raises(ValueError, match="task"):
        build_schedule(CLASSES, inv, base_count=4, tasks=0, shots=3)
    with pytest.raises(ValueError, match="shots"):
        build_schedule(CLASSES, inv, base_count=4, tasks=2, shots=0)
    with pytest.raises(ValueError, match="cannot fill"):
        build_schedule(CLASSES, inv, base_count=7, tasks=2, shots=3)
    with pytest.raises(ValueError, match="missing from inventory"):
        build_schedule(CLASSES, _inventory(CLASSES[:-1]), base_count=4, tasks=2, shots=3)
    with pytest.raises(ValueError, match="needs 9"):
        build_schedule(CLASSES, _inventory(CLASSES, n_train=8), base_count=4, tasks=2, shots=9)
    with pytest.raises(ValueError, match="more training data"):
        # base would hold 2 samples, each novel task 2*2 shots
        build_schedule(CLASSES[:5], _inventory(CLASSES[:5], n_train=2), base_count=1, tasks=2, shots=2)


def test_classes_up_to_bounds():
    sched = build_schedule(CLASSES, _inventory(CLASSES), base_count=4, tasks=2, shots=3)
    with pytest.raises(ValueError):
        sched.classes_up_to(-1)
    with pytest.raises(ValueError):
        sched.classes_up_to(3)


def test_exemplar_store():
    store = ExemplarStore(per_class=2)
    store.add("alpha", ["train_001", "train_004"])
    store.add("bravo", ["train_000"])
    assert store.classes() == ("alpha", "bravo")
    assert store.total() == 3
    assert store.pairs() == [
        ("alpha", "train_001"),
        ("alpha", "train_004"),
        ("bravo", "train_000"),
    ]
    with pytest.raises(RuntimeError, match="already stored"):
        store.add("alpha", ["train_002"])
    with pytest.raises(ValueError, match="budget"):
        store.add("charlie", ["a", "b", "c"])
    with pytest.raises(ValueError, match="budget"):
        store.add("charlie", [])
