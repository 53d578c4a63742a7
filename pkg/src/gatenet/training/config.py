"""Training configuration, presets and the plain-text ``key = value`` format."""

import dataclasses
from dataclasses import dataclass, fields

import numpy as np

from ..model.config import TOY_CHANNELS, VGG_CHANNELS, BackboneConfig, ModelConfig

# keys that change the parameter table; a checkpoint is only loadable when these agree
ARCH_KEYS = ("input_size", "block_channels", "convs_per_block", "gates", "context", "rate", "decoder")


@dataclass
class TrainConfig:
    preset: str = "toy"
    base_lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    batch: int = 4
    epochs: int = 10
    poly_power: float = 0.9
    seed: int = 0
    input_size: int = 64
    block_channels: tuple = TOY_CHANNELS
    convs_per_block: int = 2
    gates: bool = True
    context: str = "fold_aspp"
    rate: int = 2
    decoder: str = "dual"
    augment: bool = True
    max_iter: int = 0
    eval_every: int = 5
    checkpoint_every: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        self.block_channels = tuple(int(c) for c in self.block_channels)
        for name in ("base_lr", "batch", "epochs", "poly_power"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("momentum and weight_decay must be non-negative")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        self.model_config()

    def model_config(self):
        bb = BackboneConfig(self.block_channels, self.convs_per_block, self.input_size)
        return ModelConfig(bb, gates=self.gates, context=self.context, rate=self.rate, decoder=self.decoder)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_text(self):
        return dumps(self)


PRESETS = {
    # lr raised for from-scratch training of the small backbone
    "toy": dict(input_size=64, block_channels=TOY_CHANNELS, epochs=10, base_lr=0.01),
    "paper": dict(input_size=384, block_channels=VGG_CHANNELS, epochs=40, base_lr=0.001),
}


def preset(name, **overrides):
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    kw = dict(PRESETS[name])
    kw.update(overrides)
    return TrainConfig(preset=name, **kw)


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(field_type, text, key):
    text = text.strip()
    try:
        if field_type in (bool, "bool"):
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if field_type in (int, "int"):
            return int(text)
        if field_type in (float, "float"):
            return float(text)
        if field_type in (tuple, "tuple"):
            return tuple(int(v) for v in text.split(",") if v.strip())
        return text
    except ValueError:
        raise ValueError(f"bad value for {key!r}: {text!r}") from None


def _field_types():
    return {f.name: f.type for f in fields(TrainConfig)}


def dumps(cfg):
    """Canonical text: one ``key = value`` line per field, sorted by key."""
    d = dataclasses.asdict(cfg)
    return "".join(f"{k} = {_format(d[k])}\n" for k in sorted(d))


def parse_pairs(text):
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs[key] = value
    return pairs


def from_pairs(pairs, base=None):
    """Build a config from string pairs layered over ``base`` (or the preset named in pairs)."""
    types = _field_types()
    unknown = sorted(set(pairs) - set(types))
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    typed = {k: _parse(types[k], v, k) for k, v in pairs.items()}
    if base is None:
        base = preset(typed.get("preset", "toy"))
    return dataclasses.replace(base, **typed)


def loads(text, base=None):
    return from_pairs(parse_pairs(text), base)


def load(path, base=None):
    with open(path) as fh:
        return loads(fh.read(), base)


def arch_mismatch(a, b):
    """List of (key, a, b) where two configs disagree on architecture."""
    return [(k, getattr(a, k), getattr(b, k)) for k in ARCH_KEYS if getattr(a, k) != getattr(b, k)]
