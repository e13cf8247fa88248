"""Stacked LSTM regressor in plain numpy, trained by BPTT with Adam.

All parameters live in one flat float64 vector. Per layer the layout is
``W_i, W_f, W_o, W_c`` (each ``hidden x (hidden + input)``, acting on the
concatenation ``[h(t-1), x(t)]``) followed by ``b_i, b_f, b_o, b_c``; the dense
head ``W`` (``2 x hidden``) and ``b`` come last. Because the four gate
matrices are contiguous, the forward pass reads them as one ``4H x (H + D)``
block without copying.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, DivergedError, EmptyInputError, ShapeError

FORMAT_VERSION = "cyclecast-lstm/1"
N_OUTPUTS = 2
N_FEATURES = 2
GATES = ("i", "f", "o", "c")


class Architecture(str, Enum):
    CASE1 = "Case1Arch"
    STACKED = "StackedArch"


ARCHITECTURES = {
    Architecture.CASE1: ((64,), (0.05,)),
    Architecture.STACKED: ((128, 64, 32), (0.2, 0.2, 0.2)),
}


def sigmoid(x):
    # tanh form: overflow-free for any finite input
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class LstmLayerParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        shapes = {w.shape for w in (self.W_i, self.W_f, self.W_o, self.W_c)}
        lengths = {b.shape for b in (self.b_i, self.b_f, self.b_o, self.b_c)}
        if len(shapes) != 1 or len(lengths) != 1:
            raise ShapeError("gate weights (and biases) must share one shape")
        (shape,), (blen,) = shapes, lengths
        if blen != (shape[0],) or shape[1] <= shape[0]:
            raise ShapeError(f"weights {shape} incompatible with bias length {blen}")

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1] - self.W_i.shape[0]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int, batch: tuple[int, ...] = ()):
        return cls(np.zeros(batch + (hidden,)), np.zeros(batch + (hidden,)))


def cell_step(params: LstmLayerParams, x, prev: LstmState) -> LstmState:
    """One LSTM update on ``[h(t-1), x(t)]``; gates are logistic, candidate and output squash are tanh."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.input_size or prev.h.shape[-1] != params.hidden_size:
        raise ShapeError(
            f"cell expects input {params.input_size} / hidden {params.hidden_size}, "
            f"got {x.shape[-1]} / {prev.h.shape[-1]}"
        )
    z = np.concatenate([prev.h, x], axis=-1)
    i = sigmoid(z @ params.W_i.T + params.b_i)
    f = sigmoid(z @ params.W_f.T + params.b_f)
    o = sigmoid(z @ params.W_o.T + params.b_o)
    cand = np.tanh(z @ params.W_c.T + params.b_c)
    c = f * prev.c + i * cand
    h = o * np.tanh(c)
    return LstmState(h, c)


@dataclass
class LstmNetwork:
    architecture: Architecture | str
    hidden_sizes: tuple[int, ...]
    dropout_rates: tuple[float, ...]
    flat: np.ndarray
    input_size: int = N_FEATURES
    output_size: int = N_OUTPUTS
    _slices: list = field(init=False, repr=False)

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        self.dropout_rates = tuple(float(r) for r in self.dropout_rates)
        if len(self.dropout_rates) != len(self.hidden_sizes):
            raise ConfigError("one dropout rate per LSTM layer required")
        if any(not 0 <= r < 1 for r in self.dropout_rates):
            raise ConfigError("dropout rates must lie in [0, 1)")
        self._slices = []
        offset = 0
        d = self.input_size
        for h in self.hidden_sizes:
            w = slice(offset, offset + 4 * h * (h + d))
            offset = w.stop
            b = slice(offset, offset + 4 * h)
            offset = b.stop
            self._slices.append((w, b, h, d))
            d = h
        dense_w = slice(offset, offset + self.output_size * d)
        dense_b = slice(dense_w.stop, dense_w.stop + self.output_size)
        self._dense = (dense_w, dense_b)
        offset = dense_b.stop
        if self.flat.shape != (offset,):
            raise ShapeError(f"expected {offset} parameters, got {self.flat.shape}")

    @classmethod
    def zeros(cls, architecture=Architecture.CASE1, hidden_sizes=None, dropout_rates=None):
        """All-zero network; explicit sizes allow custom (e.g. tiny test) stacks."""
        try:
            architecture = Architecture(architecture)
        except ValueError:
            if hidden_sizes is None:
                raise ConfigError(f"unknown architecture {architecture!r}") from None
        if hidden_sizes is None:
            hidden_sizes, default_rates = ARCHITECTURES[architecture]
            if dropout_rates is None:
                dropout_rates = default_rates
        if dropout_rates is None:
            dropout_rates = (0.0,) * len(hidden_sizes)
        return cls(architecture, tuple(hidden_sizes), tuple(dropout_rates), np.zeros(n_parameters(hidden_sizes)))

    @property
    def n_layers(self) -> int:
        return len(self.hidden_sizes)

    def stacked(self, layer: int):
        """Gate weights as one (4H, H+D) view and biases as a (4H,) view."""
        w, b, h, d = self._slices[layer]
        return self.flat[w].reshape(4 * h, h + d), self.flat[b]

    def layer(self, layer: int) -> LstmLayerParams:
        W, b = self.stacked(layer)
        h = self.hidden_sizes[layer]
        parts = [W[k * h:(k + 1) * h] for k in range(4)] + [b[k * h:(k + 1) * h] for k in range(4)]
        return LstmLayerParams(*parts)

    @property
    def layers(self) -> list[LstmLayerParams]:
        return [self.layer(k) for k in range(self.n_layers)]

    @property
    def dense_W(self) -> np.ndarray:
        return self.flat[self._dense[0]].reshape(self.output_size, self.hidden_sizes[-1])

    @property
    def dense_b(self) -> np.ndarray:
        return self.flat[self._dense[1]]

    def copy(self) -> "LstmNetwork":
        return LstmNetwork(self.architecture, self.hidden_sizes, self.dropout_rates, self.flat.copy(),
                           self.input_size, self.output_size)

    def to_text(self) -> str:
        """Flat-text container; parameter arrays are row-major in declaration order."""
        arch = self.architecture.value if isinstance(self.architecture, Architecture) else str(self.architecture)
        lines = [
            f"format={FORMAT_VERSION}",
            f"architecture={arch}",
            f"input_size={self.input_size}",
            "hidden_sizes=" + ",".join(str(h) for h in self.hidden_sizes),
            "dropout_rates=" + ",".join(repr(r) for r in self.dropout_rates),
        ]
        for k, layer in enumerate(self.layers):
            for name in ("W_i", "W_f", "W_o", "W_c", "b_i", "b_f", "b_o", "b_c"):
                arr = getattr(layer, name)
                lines.append(f"layer{k}.{name}=" + ",".join(repr(float(v)) for v in arr.ravel()))
        lines.append("dense.W=" + ",".join(repr(float(v)) for v in self.dense_W.ravel()))
        lines.append("dense.b=" + ",".join(repr(float(v)) for v in self.dense_b.ravel()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LstmNetwork":
        from .datagen import parse_key_values

        kv = parse_key_values(text)
        if kv.get("format") != FORMAT_VERSION:
            raise ConfigError(f"unsupported network format {kv.get('format')!r}")
        hidden = tuple(int(v) for v in kv["hidden_sizes"].split(","))
        rates = tuple(float(v) for v in kv["dropout_rates"].split(","))
        chunks = []
        for k in range(len(hidden)):
            for name in ("W_i", "W_f", "W_o", "W_c", "b_i", "b_f", "b_o", "b_c"):
                chunks.append(np.array([float(v) for v in kv[f"layer{k}.{name}"].split(",")]))
        chunks.append(np.array([float(v) for v in kv["dense.W"].split(",")]))
        chunks.append(np.array([float(v) for v in kv["dense.b"].split(",")]))
        arch = kv["architecture"]
        try:
            arch = Architecture(arch)
        except ValueError:
            pass
        return cls(arch, hidden, rates, np.concatenate(chunks), int(kv["input_size"]))


def n_parameters(hidden_sizes, input_size: int = N_FEATURES, output_size: int = N_OUTPUTS) -> int:
    total, d = 0, input_size
    for h in hidden_sizes:
        total += 4 * h * (h + d) + 4 * h
        d = h
    return total + output_size * d + output_size


DENSE_BIAS_INIT = 0.5


def init_network(architecture=Architecture.CASE1, seed: int = 0) -> LstmNetwork:
    """Glorot-uniform weights per gate matrix, forget bias 1, other LSTM biases 0.

    The dense bias starts at 0.5, the middle of the [0, 1] scaled target range,
    so neither ReLU output starts in its dead region.
    """
    arch = Architecture(architecture)
    net = LstmNetwork.zeros(arch)
    rng = np.random.Generator(np.random.PCG64(seed))
    for k in range(net.n_layers):
        W, b = net.stacked(k)
        h = net.hidden_sizes[k]
        fan_in = W.shape[1]
        limit = np.sqrt(6.0 / (fan_in + h))
        for g in range(4):
            W[g * h:(g + 1) * h] = rng.uniform(-limit, limit, size=(h, fan_in))
        b[h:2 * h] = 1.0
    dense_w = net.flat[net._dense[0]]
    limit = np.sqrt(6.0 / (net.hidden_sizes[-1] + net.output_size))
    dense_w[:] = rng.uniform(-limit, limit, size=dense_w.shape)
    net.flat[net._dense[1]] = DENSE_BIAS_INIT
    return net


# -- batched forward / backward ------------------------------------------------

def _as_batch(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] == 0:
        raise EmptyInputError("input sequence must have at least one time step")
    return X


def dropout_masks(net: LstmNetwork, shape, rng: np.random.Generator):
    """Inverted-dropout masks, one (N, L, H) array per layer (None when rate is 0)."""
    n, steps = shape
    masks = []
    for h, rate in zip(net.hidden_sizes, net.dropout_rates):
        if rate == 0:
            masks.append(None)
            continue
        keep = rng.random((n, steps, h)) >= rate
        masks.append(keep / (1.0 - rate))
    return masks


def _forward(net: LstmNetwork, X, masks=None):
    N, T, _ = X.shape
    layer_in = X
    cache = []
    for k in range(net.n_layers):
        W, b = net.stacked(k)
        H = net.hidden_sizes[k]
        h = np.zeros((N, H))
        c = np.zeros((N, H))
        zs, gates, cs, hs = [], [], [c], []
        for t in range(T):
            z = np.concatenate([h, layer_in[:, t]], axis=1)
            a = z @ W.T + b
            ifo = sigmoid(a[:, :3 * H])
            g = np.tanh(a[:, 3 * H:])
            c = ifo[:, H:2 * H] * c + ifo[:, :H] * g
            h = ifo[:, 2 * H:] * np.tanh(c)
            zs.append(z)
            gates.append((ifo, g))
            cs.append(c)
            hs.append(h)
        out = np.stack(hs, axis=1)
        mask = masks[k] if masks is not None else None
        if mask is not None:
            out = out * mask
        cache.append((zs, gates, cs, mask))
        layer_in = out
    last = layer_in[:, -1]
    pre = last @ net.dense_W.T + net.dense_b
    y = np.maximum(pre, 0.0)
    return y, (cache, last, pre)


def predict(net: LstmNetwork, X) -> np.ndarray:
    """Inference (no dropout) over a batch of (L, 2) sequences; returns (N, 2)."""
    X = _as_batch(X)
    if X.shape[2] != net.input_size:
        raise ShapeError(f"sequence rows must have width {net.input_size}")
    return _forward(net, X)[0]


def forward_sequence(net: LstmNetwork, sequence, mode: str = "infer", rng: np.random.Generator | None = None):
    """Run one (L, 2) sequence through the network.

    ``mode="train"`` draws inverted-dropout masks from ``rng`` and returns
    ``(prediction, cache)``; ``mode="infer"`` returns the prediction alone.
    """
    X = _as_batch(sequence)
    if X.shape[0] != 1 or X.shape[2] != net.input_size:
        raise ShapeError(f"expected a single (L, {net.input_size}) sequence")
    if mode == "infer":
        return _forward(net, X)[0][0]
    if mode != "train":
        raise ValueError("mode must be 'train' or 'infer'")
    rng = rng if rng is not None else np.random.Generator(np.random.PCG64(0))
    masks = dropout_masks(net, X.shape[:2], rng)
    y, cache = _forward(net, X, masks)
    return y[0], cache


def loss_and_grad(net: LstmNetwork, X, Y, masks=None):
    """Mean squared error over every window and both outputs, with its gradient."""
    X = _as_batch(X)
    Y = np.asarray(Y, dtype=float).reshape(X.shape[0], -1)
    N, T, _ = X.shape
    y, (cache, last, pre) = _forward(net, X, masks)
    diff = y - Y
    loss = float(np.mean(diff**2))

    grad = np.zeros_like(net.flat)
    dy = 2.0 * diff / diff.size * (pre > 0)
    grad[net._dense[0]] = (dy.T @ last).ravel()
    grad[net._dense[1]] = dy.sum(axis=0)
    d_out = np.zeros((N, T, net.hidden_sizes[-1]))
    d_out[:, -1] = dy @ net.dense_W

    for k in reversed(range(net.n_layers)):
        W, _ = net.stacked(k)
        H = net.hidden_sizes[k]
        zs, gates, cs, mask = cache[k]
        if mask is not None:
            d_out = d_out * mask
        dW = np.zeros_like(W)
        db = np.zeros(4 * H)
        d_in = np.zeros((N, T, W.shape[1] - H))
        dh_next = np.zeros((N, H))
        dc_next = np.zeros((N, H))
        for t in reversed(range(T)):
            ifo, g = gates[t]
            i, f, o = ifo[:, :H], ifo[:, H:2 * H], ifo[:, 2 * H:]
            c, c_prev = cs[t + 1], cs[t]
            tc = np.tanh(c)
            dh = d_out[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc**2)
            da = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dh * tc * o * (1.0 - o),
                dc * i * (1.0 - g**2),
            ], axis=1)
            dW += da.T @ zs[t]
            db += da.sum(axis=0)
            dz = da @ W
            dh_next = dz[:, :H]
            d_in[:, t] = dz[:, H:]
            dc_next = dc * f
        w_sl, b_sl, _, _ = net._slices[k]
        grad[w_sl] = dW.ravel()
        grad[b_sl] = db
        d_out = d_in
    return loss, grad


# -- training --------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 1e-3
    seed: int = 0
    architecture: Architecture = Architecture.CASE1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "architecture", Architecture(self.architecture))
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        # 0 is accepted as a frozen-parameter run
        if not 0 <= self.learning_rate <= 1:
            raise ConfigError("learning_rate must lie in [0, 1]")


@dataclass
class TrainResult:
    network: LstmNetwork
    losses: list[float]


def train(net: LstmNetwork, X, Y, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Full-batch Adam on the mean squared error; returns a trained copy and the per-epoch loss.

    ``X`` is (N, L, 2) and ``Y`` is (N, 2), both already scaled. The loss
    recorded for an epoch is the training-mode loss the update was computed from.
    """
    X = _as_batch(X)
    Y = np.asarray(Y, dtype=float)
    if X.shape[0] == 0:
        raise EmptyInputError("no training windows")
    if Y.shape != (X.shape[0], net.output_size):
        raise ShapeError(f"targets must be ({X.shape[0]}, {net.output_size}), got {Y.shape}")
    net = net.copy()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    m = np.zeros_like(net.flat)
    v = np.zeros_like(net.flat)
    losses = []
    for epoch in range(1, config.epochs + 1):
        masks = dropout_masks(net, X.shape[:2], rng)
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = loss_and_grad(net, X, Y, masks)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise DivergedError(f"training diverged at epoch {epoch} (loss={loss})", epoch=epoch)
        losses.append(loss)
        m = config.beta1 * m + (1 - config.beta1) * grad
        v = config.beta2 * v + (1 - config.beta2) * grad**2
        m_hat = m / (1 - config.beta1**epoch)
        v_hat = v / (1 - config.beta2**epoch)
        net.flat -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return TrainResult(net, losses)


def _reference_loss(net: LstmNetwork, flat, X, Y) -> np.longdouble:
    """Inference-mode loss in extended precision, written gate by gate."""
    flat = np.asarray(flat, dtype=np.longdouble)

    def sig(a):
        return 1 / (1 + np.exp(-a))

    seq = np.asarray(X, dtype=np.longdouble)
    for w_sl, b_sl, H, D in net._slices:
        W = flat[w_sl].reshape(4, H, H + D)
        b = flat[b_sl].reshape(4, H)
        h = np.zeros((seq.shape[0], H), dtype=np.longdouble)
        c = np.zeros_like(h)
        outs = []
        for t in range(seq.shape[1]):
            z = np.concatenate([h, seq[:, t]], axis=1)
            i = sig(np.einsum("nk,hk->nh", z, W[0]) + b[0])
            f = sig(np.einsum("nk,hk->nh", z, W[1]) + b[1])
            o = sig(np.einsum("nk,hk->nh", z, W[2]) + b[2])
            g = np.tanh(np.einsum("nk,hk->nh", z, W[3]) + b[3])
            c = f * c + i * g
            h = o * np.tanh(c)
            outs.append(h)
        seq = np.stack(outs, axis=1)
    Wd = flat[net._dense[0]].reshape(net.output_size, -1)
    pred = np.maximum(np.einsum("nk,ok->no", seq[:, -1], Wd) + flat[net._dense[1]], 0)
    return np.mean((pred - np.asarray(Y, dtype=np.longdouble)) ** 2)


def gradient_check(net: LstmNetwork, x, y, n_samples: int = 50, step: float = 1e-5, seed: int = 0):
    """Largest relative gap between BPTT and central-difference gradients.

    Dropout is disabled. The finite differences run through a separate
    extended-precision forward pass so rounding noise stays well below the
    smallest gradients being checked. Returns ``(max_relative_error,
    max_absolute_error)`` over ``n_samples`` parameters drawn without replacement.
    """
    X = _as_batch(x)
    Y = np.asarray(y, dtype=float).reshape(X.shape[0], -1)
    _, analytic = loss_and_grad(net, X, Y)
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.choice(net.flat.size, size=min(n_samples, net.flat.size), replace=False)
    probe = net.flat.astype(np.longdouble)
    h = np.longdouble(step)
    rel, absolute = 0.0, 0.0
    for j in idx:
        orig = probe[j]
        probe[j] = orig + h
        up = _reference_loss(net, probe, X, Y)
        probe[j] = orig - h
        down = _reference_loss(net, probe, X, Y)
        probe[j] = orig
        numeric = float((up - down) / (2 * h))
        gap = abs(analytic[j] - numeric)
        absolute = max(absolute, gap)
        rel = max(rel, gap / max(1e-8, abs(analytic[j]) + abs(numeric)))
    return rel, absolute
