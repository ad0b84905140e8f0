"""Frozen-representation probes: a linear sense classifier and a token-level span tagger."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

from ..exceptions import DegenerateProbeError, InvalidInputError
from ..numerics import Adam, Tensor
from ..numerics import kernels as K


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


class _Mlp:
    """A stack of ``n_nets`` independent ReLU MLPs sharing one flat parameter buffer.

    Every net starts from the same draw, so net ``m`` of a stack trains exactly
    like a lone net fed the ``m``-th input. Training uses a fused
    forward/backward (``loss_and_grad``); ``loss_tensor`` is the same loss
    through the autodiff kernels and serves as its gradient reference.
    """

    def __init__(self, dims: Sequence[int], rng, n_nets: int = 1):
        self.dims = tuple(int(d) for d in dims)
        self.n_nets = int(n_nets)
        shapes = [(a, b) for a, b in zip(self.dims[:-1], self.dims[1:])]
        per_net = int(sum(a * b + b for a, b in shapes))
        self.flat = Tensor(np.zeros(per_net * self.n_nets), requires_grad=True)
        self.grad = np.zeros_like(self.flat.data)
        self.weights, self.biases, self._gw, self._gb = [], [], [], []
        self._blocks: list[tuple[int, tuple]] = []
        M, at = self.n_nets, 0
        for a, b in shapes:
            # the common default for linear layers: uniform within 1/sqrt(fan_in)
            bound = 1.0 / np.sqrt(a)
            draw = rng.uniform(-bound, bound, size=a * b + b)
            w = self.flat.data[at:at + M * a * b].reshape(M, a, b)
            w[...] = draw[:a * b].reshape(a, b)
            self.weights.append(w)
            self._gw.append(self.grad[at:at + M * a * b].reshape(M, a, b))
            self._blocks.append((at, (a, b)))
            at += M * a * b
            bias = self.flat.data[at:at + M * b].reshape(M, b)
            bias[...] = draw[a * b:]
            self.biases.append(bias)
            self._gb.append(self.grad[at:at + M * b].reshape(M, b))
            self._blocks.append((at, (b,)))
            at += M * b

    def params(self) -> list[Tensor]:
        return [self.flat]

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Per-net mean softmax cross-entropy for inputs (n_nets, n, d); gradients land in ``flat.grad``."""
        acts = [x]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = np.matmul(acts[-1], w) + b[:, None, :]
            acts.append(np.maximum(h, 0) if i < last else h)
        z = acts[-1]
        z = z - z.max(axis=2, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=2, keepdims=True)
        n = len(y)
        rows = np.arange(n)
        loss = -np.log(p[:, rows, y]).mean(axis=1)
        g = p
        g[:, rows, y] -= 1.0
        g /= n
        for i in range(last, -1, -1):
            np.matmul(acts[i].transpose(0, 2, 1), g, out=self._gw[i])
            g.sum(axis=1, out=self._gb[i])
            if i:
                g = np.matmul(g, self.weights[i].transpose(0, 2, 1)) * (acts[i] > 0)
        self.flat.grad = self.grad
        return loss

    def loss_tensor(self, x: np.ndarray, y: np.ndarray) -> Tensor:
        """Loss of net 0 on (n, d) inputs, built from differentiable kernels."""
        column = K.reshape(self.flat, (-1, 1))
        parts = [K.reshape(K.embedding(np.arange(at, at + int(np.prod(shape))), column), shape)
                 for at, shape in self._blocks]
        ws, bs = parts[0::2], parts[1::2]
        h = Tensor(np.asarray(x, dtype=np.float32))
        for i, (w, b) in enumerate(zip(ws, bs)):
            h = K.linear(h, w, b)
            if i < len(ws) - 1:
                h = K.relu(h)
        return K.cross_entropy(h, y)

    def logits(self, x: np.ndarray, net: int = 0) -> np.ndarray:
        h = np.asarray(x, dtype=np.float32)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w[net] + b[net]
            if i < last:
                h = np.maximum(h, 0)
        return h


def _batches(n_items: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    order = _rng(seed, epoch + 1).permutation(n_items)
    return [order[i:i + batch_size] for i in range(0, n_items, batch_size)]


def _train(net: _Mlp, data: np.ndarray, labels: np.ndarray, epochs: int, lr: float, seed: int, batches) -> None:
    opt = Adam(net.params(), lr=lr)
    for epoch in range(epochs):
        for rows in batches(epoch):
            net.loss_and_grad(data[:, rows], labels[rows])
            opt.step()


class SenseProbe(BaseEstimator, ClassifierMixin):
    """Linear map to two logits with softmax cross-entropy; class 1 is idiomatic."""

    def __init__(self, epochs: int = 55, batch_size: int = 32, lr: float = 1e-3, seed: int = 0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def fit(self, X, y):
        return fit_sense_probes([X], y, self.epochs, self.batch_size, self.lr, self.seed)[0]._into(self)

    def _into(self, other: "SenseProbe") -> "SenseProbe":
        other.net_, other.index_ = self.net_, self.index_
        other.n_features_in_, other.classes_ = self.n_features_in_, self.classes_
        return other

    def _check(self, X) -> np.ndarray:
        if not hasattr(self, "net_"):
            raise NotFittedError("SenseProbe is not fitted")
        X = check_array(X, dtype=np.float32)
        if X.shape[1] != self.n_features_in_:
            raise InvalidInputError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def decision_function(self, X) -> np.ndarray:
        z = self.net_.logits(self._check(X), self.index_)
        return z[:, 1] - z[:, 0]

    def predict_proba(self, X) -> np.ndarray:
        z = self.net_.logits(self._check(X), self.index_).astype(np.float64)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(np.int64)


def fit_sense_probes(Xs: Sequence, y, epochs: int = 55, batch_size: int = 32, lr: float = 1e-3,
                     seed: int = 0) -> list[SenseProbe]:
    """Fit one sense probe per feature matrix in ``Xs`` against shared labels.

    The probes train side by side, but each follows the same trajectory it
    would alone.
    """
    if len(Xs) == 0:
        raise InvalidInputError("no feature matrices")
    mats = []
    for X in Xs:
        X, y_checked = check_X_y(X, y, dtype=np.float32)
        mats.append(X)
    y = np.asarray(y_checked).astype(np.int64)
    if set(np.unique(y)) - {0, 1}:
        raise InvalidInputError("labels must be 0 (literal) or 1 (idiomatic)")
    if len(np.unique(y)) < 2:
        raise DegenerateProbeError("sense probe needs both classes in its training data")
    d = mats[0].shape[1]
    if any(m.shape[1] != d for m in mats):
        raise InvalidInputError("feature matrices differ in width")
    net = _Mlp((d, 2), _rng(seed, 0), n_nets=len(mats))
    _train(net, np.stack(mats), y, epochs, lr, seed,
           lambda epoch: _batches(len(y), batch_size, seed, epoch))
    probes = []
    for m in range(len(mats)):
        p = SenseProbe(epochs, batch_size, lr, seed)
        p.net_, p.index_, p.n_features_in_, p.classes_ = net, m, d, np.array([0, 1])
        probes.append(p)
    return probes


def _flatten(X) -> tuple[np.ndarray, np.ndarray]:
    if len(X) == 0:
        raise InvalidInputError("no sequences")
    mats = [np.asarray(x, dtype=np.float32) for x in X]
    if any(m.ndim != 2 for m in mats):
        raise InvalidInputError("each sequence must be a (T, d) array")
    lengths = np.array([len(m) for m in mats])
    return np.concatenate(mats), lengths


class SpanProbe(BaseEstimator):
    """Per-token MLP tagger, hidden widths d/2 and d/4.

    ``X`` is a list of (T_i, d) token-embedding arrays, ``y`` a matching list
    of 0/1 label arrays. A batch holds ``batch_size`` whole sentences.
    """

    def __init__(self, epochs: int = 100, batch_size: int = 16, lr: float = 1e-3, seed: int = 0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def fit(self, X, y):
        fitted = fit_span_probes([X], y, self.epochs, self.batch_size, self.lr, self.seed)[0]
        self.net_, self.index_, self.n_features_in_ = fitted.net_, fitted.index_, fitted.n_features_in_
        return self

    def predict(self, X) -> list[np.ndarray]:
        if not hasattr(self, "net_"):
            raise NotFittedError("SpanProbe is not fitted")
        flat, lengths = _flatten(X)
        if flat.shape[1] != self.n_features_in_:
            raise InvalidInputError(f"expected {self.n_features_in_} features, got {flat.shape[1]}")
        z = self.net_.logits(flat, self.index_)
        tags = (z[:, 1] > z[:, 0]).astype(np.int64)
        return np.split(tags, np.cumsum(lengths)[:-1])


def fit_span_probes(Xs: Sequence, y, epochs: int = 100, batch_size: int = 16, lr: float = 1e-3,
                    seed: int = 0) -> list[SpanProbe]:
    """Fit one span tagger per token-embedding list in ``Xs`` against shared labels."""
    if len(Xs) == 0:
        raise InvalidInputError("no token-embedding lists")
    flats = [_flatten(X) for X in Xs]
    lengths = flats[0][1]
    if any(not np.array_equal(f[1], lengths) for f in flats):
        raise InvalidInputError("token-embedding lists differ in sentence lengths")
    labels = np.concatenate([np.asarray(v, dtype=np.int64) for v in y])
    if len(labels) != int(lengths.sum()):
        raise InvalidInputError("labels do not align with tokens")
    if len(np.unique(labels)) < 2:
        raise DegenerateProbeError("span probe needs both token classes in its training data")
    d = flats[0][0].shape[1]
    if d < 4:
        raise InvalidInputError("span probe needs at least 4 input features")
    if any(f[0].shape[1] != d for f in flats):
        raise InvalidInputError("token embeddings differ in width")
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    # token rows of every sentence, so a batch is one concatenate
    spans = [np.arange(s, s + n) for s, n in zip(starts, lengths)]

    def batches(epoch):
        return [np.concatenate([spans[i] for i in sent])
                for sent in _batches(len(lengths), batch_size, seed, epoch)]

    net = _Mlp((d, d // 2, d // 4, 2), _rng(seed, 0), n_nets=len(flats))
    _train(net, np.stack([f[0] for f in flats]), labels, epochs, lr, seed, batches)
    probes = []
    for m in range(len(flats)):
        p = SpanProbe(epochs, batch_size, lr, seed)
        p.net_, p.index_, p.n_features_in_ = net, m, d
        probes.append(p)
    return probes
