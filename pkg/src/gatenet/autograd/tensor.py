"""Tensor value type and the gradient tape that records operations on it."""

import itertools
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

_uid = itertools.count()
_local = threading.local()


class Tensor:
    """A numpy array with an identity, an optional name and a grad flag.

    Tensors are treated as immutable once built; ops always allocate a new
    output. Leaves created with ``requires_grad=True`` are the parameters
    a backward pass reports gradients for.
    """

    __slots__ = ("data", "requires_grad", "name", "uid", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.uid = next(_uid)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"


@dataclass
class Node:
    kind: str
    inputs: tuple
    output: int
    vjp: Callable = field(repr=False)
    # extra bookkeeping kept for inspection (e.g. static op arguments)
    attrs: dict = field(default_factory=dict)


class GradTape:
    """Ordered record of differentiable operations.

    Use as a context manager; ops executed inside the ``with`` block append
    a :class:`Node` whenever one of their inputs needs a gradient. Nodes are
    appended in execution order, so the list is topologically sorted.
    """

    def __init__(self):
        self.nodes = []
        self.leaves = {}
        self._producers = {}

    def __enter__(self):
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc):
        stack = _tape_stack()
        stack.pop()
        return False

    def record(self, kind, inputs, output, vjp, **attrs):
        for t in inputs:
            if t.requires_grad and t.uid not in self._producers:
                self.leaves[t.uid] = t
        node = Node(kind, tuple(t.uid for t in inputs), output.uid, vjp, attrs)
        self._producers[output.uid] = len(self.nodes)
        self.nodes.append(node)
        return node

    def producer(self, tensor):
        """Return the node that produced ``tensor`` or None for leaves."""
        idx = self._producers.get(tensor.uid)
        return None if idx is None else self.nodes[idx]

    def __len__(self):
        return len(self.nodes)


def _tape_stack():
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Optional[GradTape]:
    stack = _tape_stack()
    return stack[-1] if stack else None


def make_output(data, inputs, kind, vjp, **attrs):
    """Wrap ``data`` as the result of op ``kind`` and record it if needed."""
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(kind, inputs, out, vjp, **attrs)
    return out


def backward(tape, loss, params=None):
    """Reverse-mode sweep over ``tape`` seeded at scalar ``loss``.

    Returns a dict mapping each parameter tensor to its gradient array. When
    ``params`` is given, every listed tensor gets an entry (zeros when the
    loss does not depend on it); otherwise all leaves seen by the tape are
    reported.
    """
    if loss.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {loss.uid: np.ones_like(loss.data)}
    leaf_grads = {}
    for node in reversed(tape.nodes):
        g = grads.pop(node.output, None)
        if g is None:
            continue
        in_grads = node.vjp(g)
        for uid, gi in zip(node.inputs, in_grads):
            if gi is None:
                continue
            target = leaf_grads if uid in tape.leaves else grads
            if uid in target:
                target[uid] = target[uid] + gi
            else:
                target[uid] = gi
    if loss.uid in tape.leaves or (loss.requires_grad and tape.producer(loss) is None):
        leaf_grads.setdefault(loss.uid, np.ones_like(loss.data))

    if params is None:
        params = list(tape.leaves.values())
    table = {}
    for p in params:
        g = leaf_grads.get(p.uid)
        table[p] = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=p.dtype).reshape(p.shape)
    return table
