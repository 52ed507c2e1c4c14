"""Flat text configuration: one ``section.key = value`` per line.

Lines starting with ``#`` and blank lines are ignored.  Every known key has a
default; unknown keys are rejected so typos fail loudly instead of silently
training with defaults.  Values are coerced to the type of the default
(int, float, bool, str, or comma-separated int tuple).
"""

from __future__ import annotations


DEFAULTS = {
    # dataset generation
    "data.points": 256,
    "data.jitter": 0.02,
    "data.train_per_class": 20,
    "data.test_per_class": 10,
    "data.dir": "",
    # multi-view depth rendering
    "render.views": 4,
    "render.height": 64,
    "render.width": 64,
    "render.splat": 3,
    "render.elevation_deg": 20.0,
    "render.distance": 2.0,
    # encoders
    "encoder.dim": 64,
    "encoder.layers": 12,
    "encoder.heads": 4,
    "encoder.tokens": 32,
    "encoder.patch": 8,
    "encoder.zs_layers": 3,
    "encoder.depth_seed": 7001,
    "encoder.zs_seed": 7002,
    "proto.seed": 0,
    # geometric rectification
    "sagr.L_r": (0, 4, 8),
    "sagr.M_R": 0.9,
    "sagr.N_sa": 2,
    "sagr.w": 1.0,
    "sagr.lambda_init": 1.0,
    "sagr.mask_direction": "keep",
    # texture path
    "tam.hidden_ratio": 0.5,
    "tam.temperature": 1.0,
    # loss mixing
    "loss.alpha_mc": 0.1,
    "loss.beta_c": 0.1,
    "loss.align_incremental": True,
    # base/novel routing
    "bnd.threshold": 0.1,
    "bnd.epochs": 10,
    "bnd.lr": 1e-3,
    "bnd.batch": 4,
    "bnd.hidden_ratio": 0.5,
    # optimization
    "train.base_epochs": 10,
    "train.inc_epochs": 20,
    "train.lr_start": 1e-3,
    "train.lr_end": 1e-4,
    "train.weight_decay": 1e-4,
    "train.batch": 16,
    "train.seed": 0,
    # incremental schedule
    "schedule.base_classes": 8,
    "schedule.tasks": 2,
    "schedule.shots": 5,
    "schedule.classes": "",
    "exemplars.per_class": 1,
}


def _coerce(key: str, raw: str):
    """Convert the raw string to the type of the key's default."""
    default = DEFAULTS[key]
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {key!r}: expected a boolean, got {raw!r}")
    if isinstance(default, tuple):
        if raw == "":
            return ()
        try:
            return tuple(int(part) for part in raw.split(","))
        except ValueError:
            raise ValueError(f"config key {key!r}: expected comma-separated ints, got {raw!r}") from None
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"config key {key!r}: expected an int, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ValueError(f"config key {key!r}: expected a float, got {raw!r}") from None
    return raw


def parse_config(text: str) -> dict:
    """Parse config text into a dict, starting from DEFAULTS."""
    cfg = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        cfg[key] = _coerce(key, raw)
    return cfg


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_config(cfg: dict, path) -> None:
    """Write a config dict as sorted ``key = value`` lines."""
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {format_value(cfg[key])}\n")
