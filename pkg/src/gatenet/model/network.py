"""Gated encoder/decoder saliency network built on :mod:`gatenet.autograd`."""

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor
from .config import ASPP_RATES, DECODER_CHANNELS, TRANSITION_CHANNELS, ModelConfig


@dataclass
class ForwardOutputs:
    d1_logits: Optional[Tensor]
    final_map: Tensor
    # per level (1..5): (g1, g2), each a (b,1,1,1) tensor or a float constant
    gates: list
    intermediates: dict = field(default_factory=dict)

    def gate_values(self):
        """Gate scalars as an array of shape (batch, 5, 2)."""
        b = self.final_map.shape[0]
        out = np.empty((b, 5, 2))
        for lvl, pair in enumerate(self.gates):
            for k, g in enumerate(pair):
                out[:, lvl, k] = g.data.reshape(b) if isinstance(g, Tensor) else g
        return out


def _conv_shape_table(cfg):
    """Ordered (name, weight shape) for every conv in the configured model."""
    bb = cfg.backbone
    ch = bb.block_channels
    t = TRANSITION_CHANNELS
    dch = DECODER_CHANNELS
    table = []
    cin = 3
    for i in range(5):
        for j in range(bb.convs_per_block):
            table.append((f"enc{i + 1}.conv{j + 1}", (ch[i], cin, 3, 3)))
            cin = ch[i]
    if cfg.uses_fpn or cfg.uses_parallel:
        for i in range(4):
            table.append((f"trans{i + 1}", (t, ch[i], 3, 3)))

    c5 = ch[4]
    if cfg.context in ("fold_aspp", "aspp", "conv1x1"):
        table.append(("aspp.b0", (t, c5, 1, 1)))
    if cfg.context == "fold_aspp":
        for k, _ in enumerate(ASPP_RATES):
            table.append((f"aspp.b{k + 1}", (4 * t, 4 * c5, 3, 3)))
    elif cfg.context == "aspp":
        for k, _ in enumerate(ASPP_RATES):
            table.append((f"aspp.b{k + 1}", (t, c5, 3, 3)))
    elif cfg.context == "fold":
        table.append(("aspp.b1", (4 * t, 4 * c5, 3, 3)))
    elif cfg.context == "atrous":
        table.append(("aspp.b1", (t, c5, 3, 3)))
    if cfg.context in ("fold_aspp", "aspp"):
        table.append(("aspp.fuse", (t, t * (1 + len(ASPP_RATES)), 3, 3)))

    if cfg.gates:
        for i in range(5):
            table.append((f"gate{i + 1}", (2, ch[i] + t, 3, 3)))

    if cfg.uses_fpn:
        for i in range(5, 1, -1):
            table.append((f"dec{i}.conv1", (dch, t, 3, 3)))
            table.append((f"dec{i}.conv2", (dch, dch, 3, 3)))
        table.append(("dec1.conv1", (dch, t, 3, 3)))
        table.append(("dec1.out", (1, dch, 3, 3)))
    if cfg.uses_parallel:
        cin = 5 * t + (1 if cfg.uses_fpn else 0)
        table.append(("head", (1, cin, 3, 3)))
    return table


def init_params(cfg, seed=0, dtype=np.float32):
    """He-uniform weights, zero biases, zero gate convs."""
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    for name, shape in _conv_shape_table(cfg):
        fan_in = shape[1] * shape[2] * shape[3]
        bound = np.sqrt(6.0 / fan_in)
        if name.startswith("gate"):
            w = np.zeros(shape)
        else:
            w = rng.uniform(-bound, bound, size=shape)
        params[f"{name}.weight"] = Tensor(w.astype(dtype), requires_grad=True, name=f"{name}.weight")
        params[f"{name}.bias"] = Tensor(np.zeros(shape[0], dtype=dtype), requires_grad=True, name=f"{name}.bias")
    return params


class GateNet:
    """The gated dual-branch network.

    Parameters live in ``self.params`` (ordered name -> :class:`Tensor`);
    :meth:`forward` is a pure function of those and the input batch.
    """

    def __init__(self, config=None, seed=0, dtype=np.float32, params=None):
        self.config = config or ModelConfig()
        self.dtype = np.dtype(dtype)
        self.params = params if params is not None else init_params(self.config, seed, self.dtype)

    # -- parameter helpers -------------------------------------------------

    def parameter_names(self):
        return list(self.params)

    def parameters(self):
        return list(self.params.values())

    def state_dict(self):
        return OrderedDict((k, v.data.copy()) for k, v in self.params.items())

    def load_state_dict(self, state):
        missing = set(self.params) ^ set(state)
        if missing:
            raise KeyError(f"parameter names differ: {sorted(missing)}")
        for k, p in self.params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ValueError(f"{k}: expected shape {p.shape}, got {arr.shape}")
            p.data = arr.astype(self.dtype, copy=True)

    def astype(self, dtype):
        params = OrderedDict(
            (k, Tensor(v.data.astype(dtype), requires_grad=True, name=k)) for k, v in self.params.items()
        )
        return GateNet(self.config, dtype=dtype, params=params)

    def _conv(self, name, x, padding=1, dilation=1):
        return ag.conv2d(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"], padding=padding,
                         dilation=dilation)

    # -- sub-networks ------------------------------------------------------

    def encode(self, x):
        bb = self.config.backbone
        feats = []
        h = x
        for i in range(5):
            for j in range(bb.convs_per_block):
                h = ag.relu(self._conv(f"enc{i + 1}.conv{j + 1}", h))
            feats.append(h)
            if i < 4:
                h = ag.max_pool2x2(h)
        return feats

    def transition(self, i, e):
        return ag.relu(self._conv(f"trans{i}", e))

    def context_module(self, e5):
        cfg = self.config
        kind = cfg.context
        if kind == "conv1x1":
            return ag.relu(self._conv("aspp.b0", e5, padding=0))
        if kind in ("fold", "atrous"):
            return self._context_branch(1, e5, cfg.rate, folded=kind == "fold")
        branches = [ag.relu(self._conv("aspp.b0", e5, padding=0))]
        for k, rate in enumerate(ASPP_RATES):
            branches.append(self._context_branch(k + 1, e5, rate, folded=kind == "fold_aspp"))
        return ag.relu(self._conv("aspp.fuse", ag.concat_channels(branches)))

    def _context_branch(self, k, e5, rate, folded):
        name = f"aspp.b{k}"
        w, b = self.params[f"{name}.weight"], self.params[f"{name}.bias"]
        if folded:
            return ag.relu(ag.folded_atrous_conv(e5, w, b, dilation=rate))
        return ag.relu(ag.conv2d(e5, w, b, padding=rate, dilation=rate))

    def gate_unit(self, i, e, context):
        if e.shape[2:] != context.shape[2:]:
            raise ValueError(
                f"gate {i}: encoder map {e.shape[2:]} and context {context.shape[2:]} differ in size"
            )
        g = ag.global_avg_pool(ag.sigmoid(self._conv(f"gate{i}", ag.concat_channels([e, context]))))
        return ag.channel_slice(g, 0, 1), ag.channel_slice(g, 1, 2)

    def decoder_block(self, i, x):
        h = ag.relu(self._conv(f"dec{i}.conv1", x))
        if i == 1:
            return self._conv("dec1.out", h)
        return ag.relu(self._conv(f"dec{i}.conv2", h))

    # -- full pass ---------------------------------------------------------

    def forward(self, x, fixed_gates=None):
        """Run the network on a (b, 3, S, S) batch.

        ``fixed_gates`` overrides the gate units with constants: a scalar
        for all ten gates or a (5, 2) array indexed by (level-1, branch).
        """
        cfg = self.config
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        s = cfg.backbone.input_size
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2:] != (s, s):
            raise ValueError(f"expected input of shape (b, 3, {s}, {s}), got {x.shape}")
        if x.dtype != self.dtype:
            x = Tensor(x.data.astype(self.dtype))

        if fixed_gates is not None:
            fixed = np.broadcast_to(np.asarray(fixed_gates, dtype=float), (5, 2))
        elif not cfg.gates:
            fixed = np.ones((5, 2))
        else:
            fixed = None

        inter = {}
        es = self.encode(x)
        ts = [self.transition(i + 1, es[i]) for i in range(4)]
        ts.append(self.context_module(es[4]))
        for i in range(5):
            inter[f"E{i + 1}"] = es[i]
            inter[f"T{i + 1}"] = ts[i]

        gates = [None] * 5

        def gate_for(i, context):
            if fixed is not None:
                return float(fixed[i - 1, 0]), float(fixed[i - 1, 1])
            return self.gate_unit(i, es[i - 1], context)

        d1 = None
        if cfg.uses_fpn:
            gates[4] = gate_for(5, ts[4])
            d = self.decoder_block(5, _gate(ts[4], gates[4][0]))
            inter["D5"] = d
            for i in range(4, 0, -1):
                t = ts[i - 1]
                up = ag.bilinear_upsample(d, *t.shape[2:])
                inter[f"up(D{i + 1})"] = up
                gates[i - 1] = gate_for(i, up)
                d = self.decoder_block(i, ag.add(_gate(t, gates[i - 1][0]), up))
                inter[f"D{i}"] = d
            d1 = d
        else:
            gates = [(1.0, 1.0) if fixed is None else (float(fixed[i, 0]), float(fixed[i, 1])) for i in range(5)]

        if cfg.uses_parallel:
            parts = [d1] if d1 is not None else []
            for i in range(5):
                gated = _gate(ts[i], gates[i][1])
                parts.append(ag.bilinear_upsample(gated, s, s))
            fcat = ag.concat_channels(parts)
            inter["F_cat"] = fcat
            fused = self._conv("head", fcat)
            inter["head"] = fused
            logits = ag.add(fused, d1) if d1 is not None else fused
            final = ag.sigmoid(logits)
        else:
            final = ag.sigmoid(d1)
        return ForwardOutputs(d1_logits=d1, final_map=final, gates=gates, intermediates=inter)

    __call__ = forward

    def predict(self, x, batch_size=8):
        """Saliency maps (n, S, S) without recording gradients."""
        x = np.asarray(x, dtype=self.dtype)
        out = []
        for k in range(0, len(x), batch_size):
            out.append(self.forward(x[k: k + batch_size]).final_map.data[:, 0])
        return np.concatenate(out, axis=0)


def _gate(t, g):
    if isinstance(g, Tensor):
        return ag.scale_by_gate(t, g)
    if g == 1.0:
        return t
    return ag.scale_by_gate(t, g)


def loss(outputs, gt):
    """Twin supervision: BCE on the FPN prediction plus BCE on the final map.

    Returns ``(total, l_s1, l_sf)``; ``l_s1`` is None when the model has no
    FPN branch.
    """
    y = np.asarray(gt.data if isinstance(gt, Tensor) else gt)
    if y.ndim == 3:
        y = y[:, None]
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("ground-truth mask must contain only 0 and 1")
    l_sf = ag.bce(outputs.final_map, y)
    if outputs.d1_logits is None:
        return l_sf, None, l_sf
    l_s1 = ag.bce(ag.sigmoid(outputs.d1_logits), y)
    return ag.add(l_s1, l_sf), l_s1, l_sf


def gate_statistics(model, images, batch_size=8):
    """Mean g1 and g2 per level over a set of images, as two 5-vectors."""
    images = np.asarray(images)
    if len(images) == 0:
        raise ValueError("gate statistics need at least one image")
    vals = []
    for k in range(0, len(images), batch_size):
        vals.append(model.forward(images[k: k + batch_size]).gate_values())
    vals = np.concatenate(vals, axis=0)
    mean = vals.mean(axis=0)
    return mean[:, 0], mean[:, 1]
