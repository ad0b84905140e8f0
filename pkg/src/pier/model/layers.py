"""Parameter containers and the transformer building blocks."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from ..exceptions import InvalidInputError
from ..numerics import Tensor
from ..numerics import kernels as K

INIT_STD = 0.02


class Module:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, dtype=np.float32, name=name)
        self._params[name] = t
        object.__setattr__(self, name, t)
        return t

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        object.__setattr__(self, name, module)
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, t in self._params.items():
            yield prefix + name, t
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def astype(self, dtype) -> "Module":
        for _, t in self.named_parameters():
            t.data = t.data.astype(dtype)
            t.grad = None
        return self


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self._items = list(modules)
        for i, m in enumerate(self._items):
            self.add_child(str(i), m)

    def __getitem__(self, i) -> Module:
        return self._items[i]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)


def _normal(rng, *shape):
    return rng.normal(0.0, INIT_STD, size=shape)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng, bias: bool = True, zero: bool = False):
        super().__init__()
        self.add_param("weight", np.zeros((d_in, d_out)) if zero else _normal(rng, d_in, d_out))
        self.has_bias = bias
        if bias:
            self.add_param("bias", np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return K.linear(x, self.weight, self.bias if self.has_bias else None)


class LayerNorm(Module):
    def __init__(self, d: int):
        super().__init__()
        self.add_param("gamma", np.ones(d))
        self.add_param("beta", np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return K.layer_norm(x, self.gamma, self.beta)


class Attention(Module):
    def __init__(self, d: int, n_heads: int, rng):
        super().__init__()
        self.n_heads = n_heads
        for n in ("q", "k", "v", "o"):
            self.add_param(f"w{n}", _normal(rng, d, d))
            self.add_param(f"b{n}", np.zeros(d))

    def __call__(self, xq: Tensor, xkv: Tensor, mask=None) -> Tensor:
        return K.multi_head_attention(xq, xkv, self.wq, self.bq, self.wk, self.bk, self.wv, self.bv,
                                      self.wo, self.bo, self.n_heads, mask)


class FeedForward(Module):
    def __init__(self, d: int, d_ff: int, rng):
        super().__init__()
        self.add_child("fc1", Linear(d, d_ff, rng))
        self.add_child("fc2", Linear(d_ff, d, rng))

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(K.relu(self.fc1(x)))


class EncoderLayer(Module):
    """Post-norm self-attention block."""

    def __init__(self, d: int, n_heads: int, d_ff: int, rng):
        super().__init__()
        self.add_child("attn", Attention(d, n_heads, rng))
        self.add_child("ln1", LayerNorm(d))
        self.add_child("ffn", FeedForward(d, d_ff, rng))
        self.add_child("ln2", LayerNorm(d))

    def __call__(self, x: Tensor, mask) -> Tensor:
        h = self.ln1(x + self.attn(x, x, mask))
        return self.ln2(h + self.ffn(h))


class DecoderLayer(Module):
    def __init__(self, d: int, n_heads: int, d_ff: int, rng):
        super().__init__()
        self.add_child("self_attn", Attention(d, n_heads, rng))
        self.add_child("ln1", LayerNorm(d))
        self.add_child("cross_attn", Attention(d, n_heads, rng))
        self.add_child("ln2", LayerNorm(d))
        self.add_child("ffn", FeedForward(d, d_ff, rng))
        self.add_child("ln3", LayerNorm(d))

    def __call__(self, y: Tensor, memory: Tensor, self_mask, cross_mask) -> Tensor:
        h = self.ln1(y + self.self_attn(y, y, self_mask))
        h = self.ln2(h + self.cross_attn(h, memory, cross_mask))
        return self.ln3(h + self.ffn(h))


class Adapter(Module):
    """Bottleneck adapter with a residual connection.

    The up-projection starts at zero, so a fresh adapter is the identity map.
    """

    def __init__(self, d: int, bottleneck: int, rng):
        super().__init__()
        self.d = d
        self.add_child("down", Linear(d, bottleneck, rng))
        self.add_child("up", Linear(bottleneck, d, rng, zero=True))

    def __call__(self, b: Tensor) -> Tensor:
        if b.shape[-1] != self.d:
            raise InvalidInputError(f"adapter expects last dim {self.d}, got {b.shape[-1]}")
        return b + self.up(K.relu(self.down(b)))


class FusionLayer(Module):
    """Trainable query/key/value matrices routing between base and adapter outputs."""

    def __init__(self, d: int, rng):
        super().__init__()
        self.add_param("Q", _normal(rng, d, d))
        self.add_param("K", _normal(rng, d, d))
        # identity values: the layer starts as a near pass-through
        self.add_param("V", np.eye(d))

    def __call__(self, b: Tensor, g: Tensor, return_weights: bool = False):
        return K.fusion_attend(b, g, self.Q, self.K, self.V, return_weights=return_weights)
