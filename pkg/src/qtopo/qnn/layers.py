"""Layers with hand-written reverse-mode gradients.

Activations are 5-D arrays (N, D, H, W, C): batch, quaternion depth (4 for
the quaternion path, 1 for plain CNNs), two lattice axes, channels.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigurationError
from ..quaternion import MULT_TABLE


@dataclass
class LayerSpec:
    kind: str  # pad | qconv | conv | depthmix | dense | activation | dropout
    kernel: tuple[int, int] = (1, 1)
    stride: tuple[int, int] = (1, 1)
    cin: int = 0
    cout: int = 0
    activation: str = ""
    rate: float = 0.0
    pad: tuple[int, int] = (0, 0)
    depth: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


class Layer:
    params: dict
    grads: dict

    def __init__(self, spec: LayerSpec):
        self.spec = spec
        self.params = {}
        self.grads = {}

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def init_params(self, rng, dtype):
        pass

    def zero_grads(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


# ---------------------------------------------------------------------------
# patch extraction shared by the convolutions


def out_size(n, k, s):
    if n < k:
        raise ConfigurationError(f"kernel extent {k} exceeds input extent {n}")
    return (n - k) // s + 1


def im2col(x, kernel, stride):
    """(B, H, W, C) -> (B, Ho, Wo, kh*kw*C), patch entries ordered (i, j, c)."""
    B, H, W, C = x.shape
    (kh, kw), (sh, sw) = kernel, stride
    Ho, Wo = out_size(H, kh, sh), out_size(W, kw, sw)
    if (sh, sw) == (kh, kw):
        t = x[:, :Ho * kh, :Wo * kw].reshape(B, Ho, kh, Wo, kw, C)
        return t.transpose(0, 1, 3, 2, 4, 5).reshape(B, Ho, Wo, kh * kw * C)
    cols = np.empty((B, Ho, Wo, kh, kw, C), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j] = x[:, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw]
    return cols.reshape(B, Ho, Wo, kh * kw * C)


def col2im(dcols, shape, kernel, stride):
    B, H, W, C = shape
    (kh, kw), (sh, sw) = kernel, stride
    Ho, Wo = dcols.shape[1:3]
    dx = np.zeros(shape, dtype=dcols.dtype)
    if (sh, sw) == (kh, kw):
        t = dcols.reshape(B, Ho, Wo, kh, kw, C).transpose(0, 1, 3, 2, 4, 5)
        dx[:, :Ho * kh, :Wo * kw] = t.reshape(B, Ho * kh, Wo * kw, C)
        return dx
    d = dcols.reshape(B, Ho, Wo, kh, kw, C)
    for i in range(kh):
        for j in range(kw):
            dx[:, i:i + sh * (Ho - 1) + 1:sh, j:j + sw * (Wo - 1) + 1:sw] += d[:, :, :, i, j]
    return dx


def glorot(rng, shape, fan_in, fan_out, dtype):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape).astype(dtype)


# ---------------------------------------------------------------------------


class PeriodicPad(Layer):
    """Append the first ``pad`` rows/columns after the last ones (wrap-around)."""

    def forward(self, x, train=False):
        ph, pw = self.spec.pad
        H, W = x.shape[2:4]
        if ph >= H or pw >= W:
            raise ConfigurationError(f"pad {self.spec.pad} must be smaller than extent {(H, W)}")
        self._shape = x.shape
        if ph:
            x = np.concatenate([x, x[:, :, :ph]], axis=2)
        if pw:
            x = np.concatenate([x, x[:, :, :, :pw]], axis=3)
        return x

    def backward(self, dy):
        ph, pw = self.spec.pad
        H, W = self._shape[2:4]
        dy = dy.copy()
        if pw:
            dy[:, :, :, :pw] += dy[:, :, :, W:]
            dy = dy[:, :, :, :W]
        if ph:
            dy[:, :, :ph] += dy[:, :, H:]
            dy = dy[:, :, :H]
        return dy


class Conv(Layer):
    """2-D convolution applied identically to every depth slice.

    With D = 1 this is an ordinary Conv2D; with D = 4 it is a Conv3D whose
    kernel has depth extent 1, so depth slices never mix.
    """

    def init_params(self, rng, dtype):
        (kh, kw), cin, cout = self.spec.kernel, self.spec.cin, self.spec.cout
        self.params["W"] = glorot(rng, (kh, kw, cin, cout), kh * kw * cin, kh * kw * cout, dtype)
        self.params["b"] = np.zeros(cout, dtype=dtype)

    def forward(self, x, train=False):
        N, D, H, W, C = x.shape
        if C != self.spec.cin:
            raise ConfigurationError(f"conv expects {self.spec.cin} channels, got {C}")
        x4 = x.reshape(N * D, H, W, C)
        cols = im2col(x4, self.spec.kernel, self.spec.stride)
        self._cache = (x4.shape, cols, (N, D))
        Wm = self.params["W"].reshape(-1, self.spec.cout)
        out = cols @ Wm + self.params["b"]
        return out.reshape(N, D, *out.shape[1:])

    def backward(self, dy):
        shape4, cols, (N, D) = self._cache
        cout = self.spec.cout
        d2 = dy.reshape(-1, cout)
        c2 = cols.reshape(-1, cols.shape[-1])
        self.grads["W"] += (c2.T @ d2).reshape(self.params["W"].shape)
        self.grads["b"] += d2.sum(axis=0)
        dcols = dy.reshape(cols.shape[:-1] + (cout,)) @ self.params["W"].reshape(-1, cout).T
        dx = col2im(dcols, shape4, self.spec.kernel, self.spec.stride)
        return dx.reshape(N, D, *shape4[1:])


class QConv(Layer):
    """Quaternion convolution.

    Kernels ``W[l]`` (l = 0..3) hold the four quaternion components.  The
    input is expanded into the four sign-permuted stacks F^(s,l) given by the
    left-multiplication matrix of the input quaternion, each stack is
    convolved with its kernel component and the results are summed over l:
    a Hamilton product (input x kernel) at every tap.  Internally the
    stacks are folded into one real weight matrix so a single matmul does
    the work.
    """

    def init_params(self, rng, dtype):
        (kh, kw), cin, cout = self.spec.kernel, self.spec.cin, self.spec.cout
        fan_in, fan_out = 4 * kh * kw * cin, 4 * kh * kw * cout
        self.params["W"] = glorot(rng, (4, kh, kw, cin, cout), fan_in, fan_out, dtype)
        self.params["b"] = np.zeros((4, cout), dtype=dtype)

    def _effective(self):
        # Weff[d, J, s, o] = sum_l T[s, l, d] W[l, J, o]
        K = self.params["W"].reshape(4, -1, self.spec.cout)
        return np.einsum("sld,ljo->djso", MULT_TABLE.astype(K.dtype), K)

    def forward(self, x, train=False):
        N, D, H, W, C = x.shape
        if D != 4:
            raise ConfigurationError(f"qconv needs quaternion depth 4, got {D}")
        if C != self.spec.cin:
            raise ConfigurationError(f"qconv expects {self.spec.cin} channels, got {C}")
        cols = im2col(x.reshape(N * 4, H, W, C), self.spec.kernel, self.spec.stride)
        _, Ho, Wo, J = cols.shape
        cols = cols.reshape(N, 4, Ho, Wo, J).transpose(0, 2, 3, 1, 4).reshape(N * Ho * Wo, 4 * J)
        Weff = self._effective()
        self._cache = (x.shape, cols, Weff, (Ho, Wo, J))
        out = cols @ Weff.reshape(4 * J, 4 * self.spec.cout)
        out = out.reshape(N, Ho, Wo, 4, self.spec.cout).transpose(0, 3, 1, 2, 4)
        return out + self.params["b"][None, :, None, None, :]

    def backward(self, dy):
        xshape, cols, Weff, (Ho, Wo, J) = self._cache
        N, _, H, W, C = xshape
        O = self.spec.cout
        self.grads["b"] += dy.sum(axis=(0, 2, 3))
        d2 = dy.transpose(0, 2, 3, 1, 4).reshape(N * Ho * Wo, 4 * O)
        dWeff = (cols.T @ d2).reshape(4, J, 4, O)
        dK = np.einsum("sld,djso->ljo", MULT_TABLE.astype(dWeff.dtype), dWeff)
        self.grads["W"] += dK.reshape(self.params["W"].shape)
        dcols = d2 @ Weff.reshape(4 * J, 4 * O).T
        dcols = dcols.reshape(N, Ho, Wo, 4, J).transpose(0, 3, 1, 2, 4).reshape(N * 4, Ho, Wo, J)
        dx = col2im(dcols, (N * 4, H, W, C), self.spec.kernel, self.spec.stride)
        return dx.reshape(xshape)


class DepthMix(Layer):
    """Convolution with a (depth x 1) kernel spanning the full depth: (N,D,H,W,C) -> (N,1,H,W,C')."""

    def init_params(self, rng, dtype):
        D, cin, cout = self.spec.depth, self.spec.cin, self.spec.cout
        self.params["W"] = glorot(rng, (D, cin, cout), D * cin, cout, dtype)
        self.params["b"] = np.zeros(cout, dtype=dtype)

    def forward(self, x, train=False):
        N, D, H, W, C = x.shape
        if D != self.spec.depth or C != self.spec.cin:
            raise ConfigurationError(
                f"depthmix expects depth {self.spec.depth} x {self.spec.cin} channels, got {D} x {C}")
        self._x = x
        out = np.einsum("ndhwc,dco->nhwo", x, self.params["W"]) + self.params["b"]
        return out[:, None]

    def backward(self, dy):
        d = dy[:, 0]
        self.grads["W"] += np.einsum("ndhwc,nhwo->dco", self._x, d)
        self.grads["b"] += d.sum(axis=(0, 1, 2))
        return np.einsum("nhwo,dco->ndhwc", d, self.params["W"])


class Dense(Layer):
    """Fully connected layer on the flattened (D, H, W, C) block; output (N,1,1,1,cout)."""

    def init_params(self, rng, dtype):
        cin, cout = self.spec.cin, self.spec.cout
        self.params["W"] = glorot(rng, (cin, cout), cin, cout, dtype)
        self.params["b"] = np.zeros(cout, dtype=dtype)

    def forward(self, x, train=False):
        self._shape = x.shape
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != self.spec.cin:
            raise ConfigurationError(f"dense expects {self.spec.cin} inputs, got {flat.shape[1]}")
        self._flat = flat
        out = flat @ self.params["W"] + self.params["b"]
        return out[:, None, None, None, :]

    def backward(self, dy):
        d = dy.reshape(dy.shape[0], -1)
        self.grads["W"] += self._flat.T @ d
        self.grads["b"] += d.sum(axis=0)
        return (d @ self.params["W"].T).reshape(self._shape)


ACTIVATIONS = ("arctan", "tanh", "relu")


class Activation(Layer):
    def __init__(self, spec):
        super().__init__(spec)
        if spec.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {spec.activation!r}")

    def forward(self, x, train=False):
        kind = self.spec.activation
        if kind == "arctan":
            self._x = x
            return np.arctan(x)
        if kind == "tanh":
            self._y = np.tanh(x)
            return self._y
        self._x = x
        return np.maximum(x, 0)

    def backward(self, dy):
        kind = self.spec.activation
        if kind == "arctan":
            return dy / (1.0 + self._x * self._x)
        if kind == "tanh":
            return dy * (1.0 - self._y * self._y)
        return dy * (self._x > 0)


class Dropout(Layer):
    """Inverted dropout; identity at evaluation time."""

    rng: np.random.Generator | None = None

    def forward(self, x, train=False):
        rate = self.spec.rate
        if not train or rate == 0.0:
            self._mask = None
            return x
        if self.rng is None:
            raise ConfigurationError("dropout layer used in training without a generator")
        keep = 1.0 - rate
        self._mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


LAYER_TYPES = {
    "pad": PeriodicPad,
    "qconv": QConv,
    "conv": Conv,
    "depthmix": DepthMix,
    "dense": Dense,
    "activation": Activation,
    "dropout": Dropout,
}


def make_layer(spec: LayerSpec) -> Layer:
    try:
        cls = LAYER_TYPES[spec.kind]
    except KeyError:
        raise ConfigurationError(f"unknown layer kind {spec.kind!r}") from None
    return cls(spec)
