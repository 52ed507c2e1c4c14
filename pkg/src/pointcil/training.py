"""Training protocol: base task, few-shot increments, routing, evaluation.

The base task trains the full model on abundant data, then freezes a copy
as the reference network.  Each incremental task fine-tunes the live model
on the few novel shots interleaved 1:1 with replayed exemplars, retrains
the binary router on frozen-reference features, and evaluates cumulatively:
routed-base samples are classified by the frozen copy over base classes,
the rest by the live model over the novel classes seen so far.

Everything derived from randomness is seeded; repeated runs of the same
config produce byte-identical manifests.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import load_checkpoint, save_checkpoint
from .clouds import CATALOG_NAMES, load_xyz, normalize_unit_sphere, scan_dataset
from .config import DEFAULTS, format_value
from .encoders import EncoderConfig, encode_depth, param_checksum, tokenize_points
from .metrics import avg_accuracy, forgetting, write_report
from .network import RectifiedShapeNet
from .prototypes import text_prototypes
from .rectify import mc_loss
from .rendering import camera_views, detect_background, render_depth
from .routing import (Discriminator, bnd_loss, export_logit_histogram,
                      predict_with_routing, relabel_binary, select_exemplars)
from .schedule import ExemplarStore, build_schedule
from .texture import alignment_loss


def cosine_lr(step: int, total: int, lr_start: float, lr_end: float) -> float:
    """Anneal from lr_start to lr_end over `total` steps on a half cosine."""
    if total < 1:
        raise ValueError(f"cosine_lr: total steps must be >= 1, got {total}")
    if not 0 <= step <= total:
        raise ValueError(f"cosine_lr: step {step} outside [0, {total}]")
    return lr_end + (lr_start - lr_end) * (1.0 + math.cos(math.pi * step / total)) / 2.0


@dataclass(frozen=True)
class TrainConfig:
    base_epochs: int = 10
    inc_epochs: int = 20
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    weight_decay: float = 1e-4
    batch: int = 16
    seed: int = 0
    alpha_mc: float = 0.1
    beta_c: float = 0.1
    align_incremental: bool = True
    bnd_threshold: float = 0.1
    bnd_epochs: int = 10
    bnd_lr: float = 1e-3
    bnd_batch: int = 4
    bnd_hidden_ratio: float = 0.5
    exemplars_per_class: int = 1

    @classmethod
    def from_config(cls, cfg: dict) -> "TrainConfig":
        return cls(
            base_epochs=cfg["train.base_epochs"], inc_epochs=cfg["train.inc_epochs"],
            lr_start=cfg["train.lr_start"], lr_end=cfg["train.lr_end"],
            weight_decay=cfg["train.weight_decay"], batch=cfg["train.batch"],
            seed=cfg["train.seed"], alpha_mc=cfg["loss.alpha_mc"],
            beta_c=cfg["loss.beta_c"], align_incremental=cfg["loss.align_incremental"],
            bnd_threshold=cfg["bnd.threshold"], bnd_epochs=cfg["bnd.epochs"],
            bnd_lr=cfg["bnd.lr"], bnd_batch=cfg["bnd.batch"],
            bnd_hidden_ratio=cfg["bnd.hidden_ratio"],
            exemplars_per_class=cfg["exemplars.per_class"],
        )


@dataclass
class SampleRecord:
    """Per-sample constants: token groups, depth features, view images."""

    groups: torch.Tensor        # (T, k, 6) float32
    depth_layers: torch.Tensor  # (L, T_img, d) float32, view-averaged
    depth_final: torch.Tensor   # (d,) float32
    gray: torch.Tensor          # (V, H, W) float32 depth images
    background: torch.Tensor    # (V, H, W) float32 background mask
    label: str


def build_cache(data_dir, inventory: dict, cfg: dict, enc_cfg: EncoderConfig,
                depth_tower) -> dict:
    """Precompute SampleRecords for every sample in the inventory.

    Depth features come from the frozen tower and never change, so they
    are computed once per sample, not once per epoch.
    """
    data_dir = Path(data_dir)
    views = camera_views(cfg["render.views"], cfg["render.elevation_deg"],
                         cfg["render.distance"])
    h, w, splat = cfg["render.height"], cfg["render.width"], cfg["render.splat"]
    cache = {}
    for class_name in sorted(inventory):
        for sid in sorted(inventory[class_name]["train"] + inventory[class_name]["test"]):
            cloud = load_xyz(data_dir / class_name / f"{sid}.xyz")
            pts = normalize_unit_sphere(cloud.points)
            grays, masks = [], []
            for view in views:
                dm = render_depth(pts, view, h, w, splat)
                grays.append(dm.pixels.astype(np.float32))
                masks.append(detect_background(dm.pixels).background.astype(np.float32))
            groups, _ = tokenize_points(pts, enc_cfg.tokens)
            depth = encode_depth(depth_tower, np.stack(grays))
            cache[(class_name, sid)] = SampleRecord(
                groups=torch.from_numpy(groups.astype(np.float32)),
                depth_layers=torch.stack(depth.layers),
                depth_final=depth.final,
                gray=torch.from_numpy(np.stack(grays)),
                background=torch.from_numpy(np.stack(masks)),
                label=class_name,
            )
    return cache


def collate(cache: dict, keys, label_index: dict = None) -> dict:
    """Stack SampleRecords into one batch dict."""
    records = [cache[k] for k in keys]
    batch = {
        "groups": torch.stack([r.groups for r in records]),
        "depth_layers": torch.stack([r.depth_layers for r in records]),
        "depth_final": torch.stack([r.depth_final for r in records]),
        "gray": torch.stack([r.gray for r in records]),
        "background": torch.stack([r.background for r in records]),
        "keys": list(keys),
    }
    if label_index is not None:
        batch["labels"] = torch.tensor([label_index[r.label] for r in records], dtype=torch.long)
    return batch


@dataclass
class RunState:
    cfg: dict
    enc_cfg: EncoderConfig
    train_cfg: TrainConfig
    variant: str
    schedule: object
    prototypes: object
    proto_t: torch.Tensor  # (C, d) float32 anchor matrix
    net: RectifiedShapeNet
    depth_tower: object
    cache: dict
    label_index: dict
    net_b: RectifiedShapeNet = None
    disc: Discriminator = None
    exemplars: ExemplarStore = None
    acc: list = field(default_factory=list)
    pred_log: dict = field(default_factory=dict)
    final_probs: list = field(default_factory=list)
    checksums: dict = field(default_factory=dict)
    completed_task: int = -1


def _schedule_classes(cfg: dict, inventory: dict):
    explicit = cfg["schedule.classes"]
    if explicit:
        return [c.strip() for c in explicit.split(",") if c.strip()]
    # default: catalog order filtered to what the dataset provides
    return [c for c in CATALOG_NAMES if c in inventory]


def prepare_run(cfg: dict, data_dir, variant: str = "full", cache: dict = None) -> RunState:
    """Build schedule, model, prototypes, and feature cache for one run."""
    if variant not in ("full", "ft"):
        raise ValueError(f"prepare_run: unknown variant {variant!r}")
    torch.set_num_threads(1)
    inventory = scan_dataset(data_dir)
    classes = _schedule_classes(cfg, inventory)
    schedule = build_schedule(classes, inventory, cfg["schedule.base_classes"],
                              cfg["schedule.tasks"], cfg["schedule.shots"],
                              seed=cfg["train.seed"])
    enc_cfg = EncoderConfig.from_config(cfg)
    train_cfg = TrainConfig.from_config(cfg)
    torch.manual_seed(train_cfg.seed)
    net = RectifiedShapeNet.from_config(cfg)
    prototypes = text_prototypes(schedule.all_classes, dim=enc_cfg.dim, seed=cfg["proto.seed"])
    depth_tower = enc_cfg.build_depth_tower()
    if cache is None:
        needed = {c: inventory[c] for c in schedule.all_classes}
        cache = build_cache(data_dir, needed, cfg, enc_cfg, depth_tower)
    label_index = {name: i for i, name in enumerate(schedule.all_classes)}
    state = RunState(
        cfg=cfg, enc_cfg=enc_cfg, train_cfg=train_cfg, variant=variant,
        schedule=schedule, prototypes=prototypes,
        proto_t=torch.from_numpy(prototypes.matrix.astype(np.float32)),
        net=net, depth_tower=depth_tower, cache=cache, label_index=label_index,
        exemplars=ExemplarStore(per_class=train_cfg.exemplars_per_class),
    )
    state.checksums["prototypes"] = hashlib.sha256(
        prototypes.matrix.astype("<f8").tobytes()).hexdigest()
    state.checksums["depth_tower"] = param_checksum(depth_tower)
    state.checksums["zs_tower"] = param_checksum(net.zs_tower)
    return state


def _task_pairs(task):
    return [(c, sid) for c in task.classes for sid in task.train[c]]


def _run_epochs(state: RunState, pairs, exemplar_pairs, epochs: int, seen: tuple,
                rng, use_align: bool) -> None:
    """Shared optimization loop for base and incremental phases."""
    tc = state.train_cfg
    net = state.net
    net.train()
    opt = torch.optim.Adam(net.trainable_parameters(), lr=tc.lr_start,
                           weight_decay=tc.weight_decay)
    proto_seen = state.proto_t[: len(seen)]
    if exemplar_pairs:
        per_epoch = 2 * len(pairs)
    else:
        per_epoch = len(pairs)
    steps_per_epoch = math.ceil(per_epoch / tc.batch)
    total_steps = epochs * steps_per_epoch
    step = 0
    for _ in range(epochs):
        order = [pairs[i] for i in rng.permutation(len(pairs))]
        if exemplar_pairs:
            ex_order = [exemplar_pairs[i] for i in rng.permutation(len(exemplar_pairs))]
            mixed = []
            for i, p in enumerate(order):
                mixed.append(p)
                mixed.append(ex_order[i % len(ex_order)])
            order = mixed
        epoch_losses = []
        for start in range(0, len(order), tc.batch):
            batch = collate(state.cache, order[start : start + tc.batch], state.label_index)
            lr = cosine_lr(step, total_steps, tc.lr_start, tc.lr_end)
            for group in opt.param_groups:
                group["lr"] = lr
            out = net.forward_batch(batch, proto_seen)
            loss = F.cross_entropy(out.logits.total, batch["labels"])
            if tc.alpha_mc:
                loss = loss + tc.alpha_mc * mc_loss(out.branch_plain, out.branch_masked)
            if tc.beta_c and use_align:
                loss = loss + tc.beta_c * alignment_loss(
                    out.view_embeddings, proto_seen[batch["labels"]])
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_losses.append(float(loss.detach()))
            step += 1
        if not all(math.isfinite(v) for v in epoch_losses):
            raise RuntimeError(f"training diverged: non-finite loss in epoch losses {epoch_losses}")
    net.eval()


def _point_features(state: RunState, pairs, net=None) -> torch.Tensor:
    """Frozen-reference trunk features for a list of (class, sid) pairs."""
    net = net if net is not None else state.net_b
    feats = []
    with torch.no_grad():
        for start in range(0, len(pairs), 32):
            batch = collate(state.cache, pairs[start : start + 32])
            feats.append(net.point_features(batch))
    return torch.cat(feats)


def _store_exemplars(state: RunState, classes) -> None:
    for class_name in classes:
        task = next(t for t in state.schedule.tasks if class_name in t.classes)
        ids = list(task.train[class_name])
        pairs = [(class_name, sid) for sid in ids]
        feats = _point_features(state, pairs).numpy()
        picked = select_exemplars(feats, ids, state.train_cfg.exemplars_per_class)
        state.exemplars.add(class_name, picked)


def train_base(state: RunState) -> None:
    """Train on the base task, freeze the reference copy, pick exemplars."""
    if state.completed_task >= 0:
        raise RuntimeError("train_base: base task already trained")
    task = state.schedule.tasks[0]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        [state.train_cfg.seed, 100])))
    _run_epochs(state, _task_pairs(task), [], state.train_cfg.base_epochs,
                task.classes, rng, use_align=True)
    state.net_b = copy.deepcopy(state.net)
    state.net_b.requires_grad_(False)
    state.net_b.eval()
    state.checksums["net_b_freeze"] = param_checksum(state.net_b)
    _store_exemplars(state, task.classes)
    state.completed_task = 0
    state.acc.append(evaluate(state, 0))


def _train_router(state: RunState, t: int) -> None:
    """Retrain the binary router for task t on frozen-reference features."""
    tc = state.train_cfg
    base_classes = state.schedule.base_classes
    novel_now = [(c, sid) for c in state.schedule.tasks[t].classes
                 for sid in state.schedule.tasks[t].train[c]]
    prior_novel = [(c, sid) for c, sid in state.exemplars.pairs()
                   if c not in base_classes and c not in state.schedule.tasks[t].classes]
    base_ex = [(c, sid) for c, sid in state.exemplars.pairs() if c in base_classes]
    novel_pairs = novel_now + prior_novel
    # replicate base exemplars so both routing labels are balanced
    base_pairs = [base_ex[i % len(base_ex)] for i in range(len(novel_pairs))]
    pairs = novel_pairs + base_pairs
    feats = _point_features(state, pairs)
    targets = torch.from_numpy(relabel_binary([c for c, _ in pairs], base_classes)).float()

    state.disc = Discriminator(state.enc_cfg.dim, tc.bnd_hidden_ratio)
    opt = torch.optim.Adam(state.disc.parameters(), lr=tc.bnd_lr)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        [tc.seed, 300, t])))
    for _ in range(tc.bnd_epochs):
        order = rng.permutation(len(pairs))
        for start in range(0, len(order), tc.bnd_batch):
            idx = torch.from_numpy(order[start : start + tc.bnd_batch].copy())
            loss = bnd_loss(state.disc(feats[idx]), targets[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
    state.disc.eval()


def train_incremental(state: RunState, t: int) -> None:
    """Fine-tune on task t's few shots; replay and routing for the full variant."""
    if t != state.completed_task + 1:
        raise RuntimeError(
            f"train_incremental: task {t} out of order, completed through {state.completed_task}")
    if t < 1 or t >= state.schedule.num_tasks:
        raise ValueError(f"train_incremental: no task {t} in the schedule")
    task = state.schedule.tasks[t]
    seen = state.schedule.classes_up_to(t)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        [state.train_cfg.seed, 200, t])))
    exemplar_pairs = state.exemplars.pairs() if state.variant == "full" else []
    _run_epochs(state, _task_pairs(task), exemplar_pairs, state.train_cfg.inc_epochs,
                seen, rng, use_align=state.train_cfg.align_incremental)
    if state.variant == "full":
        _store_exemplars(state, task.classes)
        _train_router(state, t)
    state.completed_task = t
    state.acc.append(evaluate(state, t))


def evaluate(state: RunState, t: int) -> float:
    """Cumulative test accuracy (percent) over tasks 0..t."""
    if t > state.completed_task:
        raise RuntimeError(f"evaluate: task {t} not trained yet")
    test_pairs = []
    for task in state.schedule.tasks[: t + 1]:
        for c in task.classes:
            test_pairs.extend((c, sid) for sid in task.test[c])
    base_classes = state.schedule.base_classes
    n_base = len(base_classes)
    seen = state.schedule.classes_up_to(t)
    routed = state.variant == "full" and t >= 1

    log = []
    correct = 0
    probs_out = []
    with torch.no_grad():
        for start in range(0, len(test_pairs), 32):
            keys = test_pairs[start : start + 32]
            batch = collate(state.cache, keys, state.label_index)
            if not routed:
                # single label space over everything seen so far
                out = state.net.forward_batch(batch, state.proto_t[: len(seen)])
                preds = out.logits.total.argmax(dim=1)
                for i, key in enumerate(keys):
                    true = int(batch["labels"][i])
                    pred = int(preds[i])
                    correct += pred == true
                    log.append({"key": key, "true": true, "pred": pred, "prob": None})
            else:
                probs = state.disc(state.net_b.point_features(batch))
                base_out = state.net_b.forward_batch(batch, state.proto_t[:n_base])
                novel_out = state.net.forward_batch(batch, state.proto_t[n_base : len(seen)])
                for i, key in enumerate(keys):
                    prob = float(probs[i])
                    pred = predict_with_routing(
                        prob, base_out.logits.total[i], novel_out.logits.total[i],
                        state.train_cfg.bnd_threshold, n_base)
                    true = int(batch["labels"][i])
                    correct += pred == true
                    probs_out.append(prob)
                    log.append({"key": key, "true": true, "pred": pred, "prob": prob})
    state.pred_log[t] = log
    if routed:
        state.final_probs = probs_out
    return 100.0 * correct / len(test_pairs)


def run_all_tasks(state: RunState) -> RunState:
    if state.completed_task < 0:
        train_base(state)
    for t in range(state.completed_task + 1, state.schedule.num_tasks):
        train_incremental(state, t)
    return state


def clone_after_base(state: RunState, variant: str) -> RunState:
    """Fork a base-trained state so two protocols share one base phase."""
    if state.completed_task != 0:
        raise RuntimeError("clone_after_base: state must be exactly base-trained")
    fork = RunState(
        cfg=state.cfg, enc_cfg=state.enc_cfg, train_cfg=state.train_cfg,
        variant=variant, schedule=state.schedule, prototypes=state.prototypes,
        proto_t=state.proto_t, net=copy.deepcopy(state.net),
        depth_tower=state.depth_tower, cache=state.cache,
        label_index=state.label_index, net_b=copy.deepcopy(state.net_b),
        exemplars=copy.deepcopy(state.exemplars),
        checksums=dict(state.checksums), completed_task=0,
    )
    fork.acc = list(state.acc)
    fork.pred_log = {0: list(state.pred_log.get(0, []))}
    return fork


def write_manifest(state: RunState, path) -> None:
    """Structured-text run record; byte-identical across identical runs."""
    lines = ["manifest.version = 1",
             f"run.variant = {state.variant}",
             f"run.seed = {state.train_cfg.seed}",
             f"run.task_count = {state.schedule.num_tasks}"]
    for t, acc in enumerate(state.acc):
        lines.append(f"run.acc_{t} = {acc!r}")
    if state.acc:
        lines.append(f"run.aa = {avg_accuracy(state.acc)!r}")
    if len(state.acc) >= 2:
        lines.append(f"run.delta_a = {forgetting(state.acc)!r}")
    for t, task in enumerate(state.schedule.tasks):
        lines.append(f"schedule.task_{t} = {','.join(task.classes)}")
    if state.net_b is not None:
        lines.append(f"checksum.net_b_final = {param_checksum(state.net_b)}")
    for name in sorted(state.checksums):
        lines.append(f"checksum.{name} = {state.checksums[name]}")
    for key in sorted(state.cfg):
        lines.append(f"config.{key} = {format_value(state.cfg[key])}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def save_run(state: RunState, out_dir) -> None:
    """Write report.csv, manifest.txt, checkpoint.bin, histogram.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [(t, len(state.schedule.classes_up_to(t)), acc)
            for t, acc in enumerate(state.acc)]
    write_report(rows, out_dir / "report.csv")
    write_manifest(state, out_dir / "manifest.txt")
    arrays = {}
    for prefix, module in (("net", state.net), ("net_b", state.net_b), ("disc", state.disc)):
        if module is None:
            continue
        for name, p in module.named_parameters():
            arrays[f"{prefix}.{name}"] = p.detach().numpy()
    save_checkpoint(arrays, out_dir / "checkpoint.bin")
    if state.final_probs:
        export_logit_histogram(state.final_probs, out_dir / "histogram.csv")


def load_run_networks(cfg: dict, checkpoint_path):
    """Rebuild (net, net_b, disc) from a config dict and a checkpoint file."""
    arrays = load_checkpoint(checkpoint_path)
    enc_cfg = EncoderConfig.from_config(cfg)

    def restore(prefix, module):
        sub = {k[len(prefix) + 1 :]: torch.from_numpy(v.copy())
               for k, v in arrays.items() if k.startswith(prefix + ".")}
        if not sub:
            return None
        module.load_state_dict(sub)
        module.eval()
        return module

    net = restore("net", RectifiedShapeNet.from_config(cfg))
    net_b = restore("net_b", RectifiedShapeNet.from_config(cfg))
    disc = restore("disc", Discriminator(enc_cfg.dim, cfg["bnd.hidden_ratio"]))
    if net is None:
        raise ValueError(f"load_run_networks: no net arrays in {checkpoint_path}")
    return net, net_b, disc
