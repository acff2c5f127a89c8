from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

from utils.errors import ShapeError


class Tensor:
    """
    Tensor denso (numpy, orden C) con gradiente opcional.

    Las hojas con requires_grad acumulan su gradiente en `grad` tras backward().
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_node")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        dtype=None,
    ):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float64, np.float32):
            arr = arr.astype(np.float64)
        self.data: np.ndarray = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._node: Optional[Node] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", [self.shape], "se esperaba un escalar")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" '{self.name}'" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def constant(data, like: Tensor | None = None) -> Tensor:
    dtype = like.dtype if like is not None else None
    return Tensor(data, requires_grad=False, dtype=dtype)


# ─────────────────────────────────────────────
# Tape
# ─────────────────────────────────────────────

@dataclass
class Node:
    op: str
    out: Tensor
    parents: Sequence[Tensor]
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Tape:
    """
    Registro ordenado de primitivas. El orden de grabación es topológico,
    así que recorrerlo al revés visita cada nodo una sola vez.
    """
    nodes: List[Node] = field(default_factory=list)
    enabled: bool = True

    def record(self, node: Node) -> None:
        self.nodes.append(node)
        node.out._node = node

    def clear(self) -> None:
        for node in self.nodes:
            node.out._node = None
        self.nodes.clear()


_local = threading.local()


def current_tape() -> Tape:
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = Tape()
        _local.tape = tape
    return tape


@contextmanager
def no_grad() -> Iterator[None]:
    tape = current_tape()
    prev = tape.enabled
    tape.enabled = False
    try:
        yield
    finally:
        tape.enabled = prev


def is_recording(*inputs: Tensor) -> bool:
    if not current_tape().enabled:
        return False
    return any(t.requires_grad for t in inputs)


def record(op: str, out: Tensor, parents: Sequence[Tensor], backward_fn) -> Tensor:
    if is_recording(*parents):
        out.requires_grad = True
        current_tape().record(Node(op, out, tuple(parents), backward_fn))
    return out


# ─────────────────────────────────────────────
# Backward
# ─────────────────────────────────────────────

def backward(loss: Tensor) -> None:
    """
    Propaga d(loss)/d(hoja) y acumula en `.grad` de cada hoja con requires_grad.
    Consume la tape del hilo actual.
    """
    if loss.data.size != 1 or loss.data.ndim > 1:
        raise ShapeError("backward", [loss.shape], "la pérdida debe ser escalar")

    tape = current_tape()
    if loss._node is None:
        # Pérdida constante: ninguna hoja depende de ella.
        tape.clear()
        return

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}

    for node in reversed(tape.nodes):
        g_out = grads.pop(id(node.out), None)
        if g_out is None:
            continue
        parent_grads = node.backward(g_out)
        for parent, g in zip(node.parents, parent_grads):
            if g is None or not parent.requires_grad:
                continue
            if g.shape != parent.shape:
                raise ShapeError(f"{node.op}.backward", [g.shape, parent.shape])
            if parent._node is None:
                # Hoja
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=parent.dtype, copy=True)
                else:
                    parent.grad += g
            else:
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g

    tape.clear()
