"""Architecture configuration and ablation variants."""

from dataclasses import asdict, dataclass, field, replace

TRANSITION_CHANNELS = 32
DECODER_CHANNELS = 32
ASPP_RATES = (2, 4, 6)

TOY_CHANNELS = (16, 32, 64, 64, 64)
VGG_CHANNELS = (64, 128, 256, 512, 512)

CONTEXT_MODULES = ("fold_aspp", "aspp", "fold", "atrous", "conv1x1")
DECODERS = ("dual", "progressive", "parallel")


@dataclass(frozen=True)
class BackboneConfig:
    block_channels: tuple = TOY_CHANNELS
    convs_per_block: int = 2
    input_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "block_channels", tuple(int(c) for c in self.block_channels))
        if len(self.block_channels) != 5:
            raise ValueError(f"backbone needs exactly 5 levels, got {len(self.block_channels)}")
        if any(c <= 0 for c in self.block_channels) or self.convs_per_block <= 0:
            raise ValueError("block channels and convs_per_block must be positive")
        if self.input_size <= 0 or self.input_size % 16:
            raise ValueError(f"input_size must be a positive multiple of 16, got {self.input_size}")

    def level_sizes(self):
        s = self.input_size
        return [s, s // 2, s // 4, s // 8, s // 16]


@dataclass(frozen=True)
class ModelConfig:
    """Full model description.

    ``context`` selects the module that turns E5 into T5: ``fold_aspp``
    (default), plain ``aspp`` with the same rates, a single ``fold`` or
    ``atrous`` layer at ``rate``, or ``conv1x1`` (the plain FPN baseline).
    ``decoder`` is ``dual`` (FPN + parallel branch), ``progressive`` (FPN
    only) or ``parallel`` (concatenation only).
    """

    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    gates: bool = True
    context: str = "fold_aspp"
    rate: int = 2
    decoder: str = "dual"

    def __post_init__(self):
        if self.context not in CONTEXT_MODULES:
            raise ValueError(f"context must be one of {CONTEXT_MODULES}, got {self.context!r}")
        if self.decoder not in DECODERS:
            raise ValueError(f"decoder must be one of {DECODERS}, got {self.decoder!r}")
        if self.context in ("fold", "atrous") and self.rate < 1:
            raise ValueError(f"dilation rate must be >= 1, got {self.rate}")
        if self.context in ("fold_aspp", "fold") and self.backbone.input_size % 32:
            raise ValueError(
                f"folded context modules need an even top-level map; input_size {self.backbone.input_size} "
                "gives an odd 1/16 resolution (use a multiple of 32)"
            )
        if self.decoder == "parallel" and self.gates:
            raise ValueError(
                "gate units take their context from the progressive decoder; "
                "the parallel-only decoder must be built with gates=False"
            )

    @property
    def uses_fpn(self):
        return self.decoder in ("dual", "progressive")

    @property
    def uses_parallel(self):
        return self.decoder in ("dual", "parallel")

    def to_dict(self):
        d = asdict(self)
        d["backbone"]["block_channels"] = list(self.backbone.block_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        bb = BackboneConfig(**d.pop("backbone", {}))
        return cls(backbone=bb, **d)


def ablation_variant(name, backbone=None, rate=2):
    """Named variant from the ablation tables.

    ``fpn``, ``gates``, ``fold_aspp`` and ``full`` form the cumulative
    ladder; ``atrous`` / ``fold`` (single layer at ``rate``) and ``aspp``
    swap the context module of the gated baseline.
    """
    backbone = backbone or BackboneConfig()
    base = ModelConfig(backbone=backbone, gates=False, context="conv1x1", decoder="progressive")
    ladder = {
        "fpn": base,
        "gates": replace(base, gates=True),
        "fold_aspp": replace(base, gates=True, context="fold_aspp"),
        "full": replace(base, gates=True, context="fold_aspp", decoder="dual"),
        "aspp": replace(base, gates=True, context="aspp"),
        "atrous": replace(base, gates=True, context="atrous", rate=rate),
        "fold": replace(base, gates=True, context="fold", rate=rate),
    }
    if name not in ladder:
        raise ValueError(f"unknown ablation variant {name!r}; choose from {sorted(ladder)}")
    return ladder[name]


LADDER = ("fpn", "gates", "fold_aspp", "full")
