"""Network assembly, loss, optimizers and checkpoints."""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .. import rng as seeds
from ..errors import ConfigurationError, FormatError, NumericalFailureError
from .layers import Dropout, LayerSpec, make_layer

N_CLASSES = 9
CLASS_VALUES = tuple(range(-4, 5))  # one-hot index i <-> Chern number i - 4


def class_index(chern: int) -> int:
    if not -4 <= chern <= 4:
        raise ConfigurationError(f"Chern number {chern} outside the 9-class range")
    return int(chern) + 4


@dataclass
class NetConfig:
    """Everything needed to rebuild and retrain a network."""

    arch: str = "qcnn"  # qcnn | cnn
    activation: str = "arctan"  # first-layer activation
    L: int = 40
    widths: tuple = (16, 24, 24)  # channels after the first three convolutions
    stage_kernels: tuple = (5, 4, 2)  # non-overlapping stages after the first layer
    first_kernel: int = 2
    dropout: float = 0.2
    seed: int = 0
    dtype: str = "float64"
    optimizer: str = "adam"
    learning_rate: float = 3e-3
    lr_decay: float = 0.5  # learning rate multiplied by this every lr_step epochs
    lr_step: int = 20
    first_gain: float = 5.0  # scale on the first convolution's initial weights
    batch_size: int = 32
    epochs: int = 60

    def learning_rate_at(self, epoch: int) -> float:
        """Rate used during 1-based ``epoch``."""
        if self.lr_step <= 0:
            return self.learning_rate
        return self.learning_rate * self.lr_decay ** ((epoch - 1) // self.lr_step)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "NetConfig":
        kw = {}
        types = {f.name: f.default for f in fields(cls)}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, val = line.partition("=")
            if key not in types:
                raise FormatError(f"unknown config key {key!r}")
            default = types[key]
            if isinstance(default, tuple):
                kw[key] = tuple(int(x) for x in val.split(",") if x)
            elif isinstance(default, bool):
                kw[key] = val == "True"
            else:
                kw[key] = type(default)(val)
        return cls(**kw)


QCNN_DEFAULT = NetConfig(arch="qcnn", widths=(16, 24, 24))
CNN_DEFAULT = NetConfig(arch="cnn", widths=(24, 24, 24))


def default_config(arch: str, **overrides) -> NetConfig:
    base = {"qcnn": QCNN_DEFAULT, "cnn": CNN_DEFAULT}.get(arch)
    if base is None:
        raise ConfigurationError(f"unknown architecture {arch!r}")
    cfg = NetConfig(**{f.name: getattr(base, f.name) for f in fields(NetConfig)})
    for k, v in overrides.items():
        setattr(cfg, k, v)
    return cfg


def layer_specs(cfg: NetConfig) -> list[LayerSpec]:
    """Layer stack for the qCNN or CNN classifier.

    qcnn: pad -> qconv 2x2/1 (arctan) -> three non-overlapping depth-wise
          convolutions (tanh) -> dropout -> 4x1 depth mix to 9 logits.
    cnn:  pad -> conv 2x2/1 on 3 channels (arctan) -> the same three
          non-overlapping stages (tanh) -> dropout -> dense to 9 logits.
    """
    k1 = cfg.first_kernel
    w1, w2, w3 = cfg.widths
    specs = [LayerSpec("pad", pad=(k1 - 1, k1 - 1))]
    if cfg.arch == "qcnn":
        specs.append(LayerSpec("qconv", kernel=(k1, k1), stride=(1, 1), cin=1, cout=w1))
    elif cfg.arch == "cnn":
        specs.append(LayerSpec("conv", kernel=(k1, k1), stride=(1, 1), cin=3, cout=w1))
    else:
        raise ConfigurationError(f"unknown architecture {cfg.arch!r}")
    specs.append(LayerSpec("activation", activation=cfg.activation))
    size = cfg.L
    chans = [w1, w2, w3, N_CLASSES]
    for i, k in enumerate(cfg.stage_kernels):
        if size % k:
            raise ConfigurationError(f"stage kernel {k} does not tile extent {size}")
        specs.append(LayerSpec("conv", kernel=(k, k), stride=(k, k), cin=chans[i], cout=chans[i + 1]))
        specs.append(LayerSpec("activation", activation="tanh"))
        size //= k
    if size != 1:
        raise ConfigurationError(f"stages leave a {size}x{size} map, expected 1x1")
    specs.append(LayerSpec("dropout", rate=cfg.dropout))
    if cfg.arch == "qcnn":
        specs.append(LayerSpec("depthmix", cin=N_CLASSES, cout=N_CLASSES, depth=4))
    else:
        specs.append(LayerSpec("dense", cin=N_CLASSES, cout=N_CLASSES))
    return specs


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, labels) -> float:
    """Mean of -log p[label]; ``labels`` are class indices."""
    p = probs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, np.finfo(probs.dtype).tiny))))


class Network:
    def __init__(self, cfg: NetConfig, specs: list[LayerSpec] | None = None, init: bool = True):
        self.config = cfg
        self.dtype = np.dtype(cfg.dtype)
        self.layers = [make_layer(s) for s in (specs or layer_specs(cfg))]
        if init:
            gen = seeds.generator(cfg.seed, seeds.INIT)
            for layer in self.layers:
                layer.init_params(gen, self.dtype)
            first = next(layer for layer in self.layers if layer.spec.kind in ("qconv", "conv"))
            first.params["W"] *= cfg.first_gain
        self.zero_grads()

    # -- bookkeeping -------------------------------------------------------
    @property
    def specs(self):
        return [layer.spec for layer in self.layers]

    def parameters(self):
        """(layer index, name, array) for every parameter tensor."""
        return [(i, k, v) for i, layer in enumerate(self.layers) for k, v in layer.params.items()]

    def param_count(self) -> int:
        return int(sum(v.size for _, _, v in self.parameters()))

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def set_dropout_rng(self, gen):
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = gen

    # -- passes --------------------------------------------------------------
    def encode(self, spins):
        """(N, L, L, 3) unit spins -> network input for this architecture."""
        if self.config.arch == "qcnn":
            return encode_pure(spins, self.dtype)
        return encode_channels(spins, self.dtype)

    def logits(self, x, train=False):
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, train=train)
            if not np.all(np.isfinite(x)):
                raise NumericalFailureError(f"non-finite activations after layer {i} ({layer.spec.kind})", i)
        return x.reshape(x.shape[0], -1)

    def forward(self, x, train=False):
        return softmax(self.logits(x, train))

    def backward(self, probs, labels):
        """Accumulate gradients of the mean cross-entropy into every layer."""
        d = probs.copy()
        d[np.arange(len(labels)), labels] -= 1.0
        d /= len(labels)
        d = d[:, None, None, None, :]
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    def loss_and_grads(self, x, labels, train=False):
        self.zero_grads()
        probs = self.forward(x, train)
        loss = cross_entropy(probs, labels)
        self.backward(probs, labels)
        return loss, probs

    def predict(self, spins, batch_size=256):
        out = []
        for s in range(0, len(spins), batch_size):
            out.append(self.forward(self.encode(spins[s:s + batch_size])))
        return np.concatenate(out) if out else np.zeros((0, N_CLASSES))


def build(cfg: NetConfig) -> Network:
    return Network(cfg)


def encode_pure(spins, dtype=np.float64):
    """Spins (N, L, L, 3) or (L, L, 3) -> pure quaternions, shape (N, 4, L, L, 1)."""
    s = np.asarray(getattr(spins, "data", spins))
    single = s.ndim == 3
    if single:
        s = s[None]
    x = np.zeros((s.shape[0], 4) + s.shape[1:3] + (1,), dtype=dtype)
    x[:, 1:, :, :, 0] = np.moveaxis(s, -1, 1)
    return x


def encode_channels(spins, dtype=np.float64):
    """Spins -> plain CNN input of shape (N, 1, L, L, 3)."""
    s = np.asarray(getattr(spins, "data", spins))
    if s.ndim == 3:
        s = s[None]
    return s[:, None].astype(dtype)


# ---------------------------------------------------------------------------
# optimizers


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, net: Network):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr = np.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for i, layer in enumerate(net.layers):
            for name, p in layer.params.items():
                g = layer.grads[name]
                key = (i, name)
                if key not in self.m:
                    self.m[key] = np.zeros_like(p)
                    self.v[key] = np.zeros_like(p)
                m, v = self.m[key], self.v[key]
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * g * g
                p -= self.lr * corr * m / (np.sqrt(v) + self.eps)


class SGD:
    def __init__(self, lr=1e-2):
        self.lr = lr

    def step(self, net: Network):
        for layer in net.layers:
            for name, p in layer.params.items():
                p -= self.lr * layer.grads[name]


def make_optimizer(cfg: NetConfig):
    if cfg.optimizer == "adam":
        return Adam(cfg.learning_rate)
    if cfg.optimizer == "sgd":
        return SGD(cfg.learning_rate)
    raise ConfigurationError(f"unknown optimizer {cfg.optimizer!r}")


# ---------------------------------------------------------------------------
# checkpoint container
#
#   "QNN1" | u32 version | u32 len | config text (utf-8, key=value lines)
#   u32 n_layers, then per layer:
#     u8 kind | u16 kh kw sh sw | u32 cin cout | u8 activation | f64 rate
#     | u16 pad_h pad_w | u8 depth | u8 n_params
#     per param: u8 name_len, name | u8 ndim | u32 dims... | f64 data (row-major)
#   all little-endian

CKPT_MAGIC = b"QNN1"
CKPT_VERSION = 1
_KINDS = ["pad", "qconv", "conv", "depthmix", "dense", "activation", "dropout"]
_ACTS = ["", "arctan", "tanh", "relu"]
_LAYER = struct.Struct("<B4H2IBd2HBB")


def save_checkpoint(net: Network, path) -> None:
    buf = io.BytesIO()
    text = net.config.to_text().encode("utf-8")
    buf.write(CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(text)) + text)
    buf.write(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        s = layer.spec
        buf.write(_LAYER.pack(_KINDS.index(s.kind), *s.kernel, *s.stride, s.cin, s.cout,
                              _ACTS.index(s.activation), float(s.rate), *s.pad, s.depth,
                              len(layer.params)))
        for name, arr in layer.params.items():
            nb = name.encode("ascii")
            buf.write(struct.pack("<B", len(nb)) + nb + struct.pack("<B", arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"checkpoint truncated: need {n} bytes", self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        st = struct.Struct(fmt)
        return st.unpack(self.take(st.size))


def load_checkpoint(path) -> Network:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != CKPT_MAGIC:
        raise FormatError("bad checkpoint magic", 0)
    version, tlen = r.unpack("<II")
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    cfg = NetConfig.from_text(r.take(tlen).decode("utf-8"))
    (n_layers,) = r.unpack("<I")
    specs, tensors = [], []
    for _ in range(n_layers):
        at = r.pos
        vals = r.unpack(_LAYER.format)
        kind_i, kh, kw, sh, sw, cin, cout, act_i, rate, ph, pw, depth, n_params = vals
        if kind_i >= len(_KINDS) or act_i >= len(_ACTS):
            raise FormatError("unknown layer code in checkpoint", at)
        specs.append(LayerSpec(_KINDS[kind_i], (kh, kw), (sh, sw), cin, cout, _ACTS[act_i],
                               rate, (ph, pw), depth))
        params = {}
        for _ in range(n_params):
            (nlen,) = r.unpack("<B")
            name = r.take(nlen).decode("ascii")
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I")
            count = int(np.prod(shape)) if ndim else 1
            params[name] = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape)
        tensors.append(params)
    if r.pos != len(r.data):
        raise FormatError("trailing bytes after checkpoint", r.pos)
    net = Network(cfg, specs, init=False)
    for layer, params in zip(net.layers, tensors):
        layer.params = {k: v.astype(net.dtype) for k, v in params.items()}
    net.zero_grads()
    return net
