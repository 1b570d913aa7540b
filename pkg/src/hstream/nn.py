"""Minimal differentiable layers with exact analytic gradients.

Everything the action classifier needs: 2-D convolution, 2x2 max-pooling,
dense, relu, sigmoid, softmax, inverted dropout, softmax cross-entropy, and
SGD with momentum. Forward calls return (output, cache); backward consumes
the cache and returns (grad_input, named parameter grads). Layers hold
parameters but no activations, so inference on a frozen net is thread-safe.

Training runs in float32; gradient checking deep-copies the network to
float64 so central differences stay near machine precision.
"""

from __future__ import annotations

import copy

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PROB_FLOOR = 1e-12


def glorot_uniform(shape, fan_in, fan_out, rng, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    kind = "layer"

    def params(self) -> dict:
        return {}

    def spec(self) -> dict:
        return {"kind": self.kind}

    def cast_(self, dtype) -> None:
        pass

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, grad_out, cache):
        raise NotImplementedError


class Conv2D(Layer):
    """Cross-correlation over [B, H, W, C] input, weight layout (KH, KW, Cin, Cout)."""

    kind = "conv2d"

    def __init__(self, in_ch, out_ch, kernel=3, stride=1, padding=1, rng=None):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        fan = kernel * kernel
        self.weight = glorot_uniform((kernel, kernel, in_ch, out_ch), fan * in_ch, fan * out_ch, rng)
        self.bias = np.zeros(out_ch, dtype=np.float32)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def spec(self):
        return {
            "kind": self.kind,
            "in_ch": self.in_ch,
            "out_ch": self.out_ch,
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
        }

    def cast_(self, dtype):
        self.weight = self.weight.astype(dtype)
        self.bias = self.bias.astype(dtype)

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x)
        if x.ndim != 4 or x.shape[3] != self.in_ch:
            raise ValueError(f"conv2d expects [B, H, W, {self.in_ch}], got {x.shape}")
        k, s, p = self.kernel, self.stride, self.padding
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        windows = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::s, ::s]
        # windows: [B, OH, OW, C, k, k] -> cols flattened as (k, k, C)
        b, oh, ow = windows.shape[:3]
        cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(b, oh, ow, k * k * self.in_ch)
        w2 = self.weight.reshape(k * k * self.in_ch, self.out_ch)
        out = cols @ w2 + self.bias
        return out, (cols, x.shape, xp.shape)

    def backward(self, grad_out, cache):
        cols, x_shape, xp_shape = cache
        k, s, p = self.kernel, self.stride, self.padding
        b, oh, ow, _ = grad_out.shape
        w2 = self.weight.reshape(k * k * self.in_ch, self.out_ch)
        grad_bias = grad_out.sum(axis=(0, 1, 2))
        flat_cols = cols.reshape(-1, k * k * self.in_ch)
        flat_g = grad_out.reshape(-1, self.out_ch)
        grad_weight = (flat_cols.T @ flat_g).reshape(self.weight.shape)
        grad_cols = (flat_g @ w2.T).reshape(b, oh, ow, k, k, self.in_ch)
        grad_xp = np.zeros(xp_shape, dtype=grad_out.dtype)
        for ky in range(k):
            for kx in range(k):
                grad_xp[:, ky : ky + s * oh : s, kx : kx + s * ow : s, :] += grad_cols[:, :, :, ky, kx, :]
        grad_x = grad_xp[:, p : xp_shape[1] - p, p : xp_shape[2] - p, :] if p else grad_xp
        if grad_x.shape != x_shape:
            raise ValueError(f"conv2d backward cache mismatch: {grad_x.shape} vs {x_shape}")
        return grad_x, {"weight": grad_weight, "bias": grad_bias}


class MaxPool2(Layer):
    """2x2 max pooling with stride 2; gradient routes to the first argmax only."""

    kind = "maxpool"

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x)
        if x.ndim != 4:
            raise ValueError(f"maxpool expects [B, H, W, C], got {x.shape}")
        b, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool needs even spatial dims, got {h}x{w}")
        oh, ow = h // 2, w // 2
        tiles = x.reshape(b, oh, 2, ow, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, oh, ow, c, 4)
        idx = tiles.argmax(axis=-1)
        out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
        return out, (idx, x.shape)

    def backward(self, grad_out, cache):
        idx, x_shape = cache
        b, h, w, c = x_shape
        oh, ow = h // 2, w // 2
        if grad_out.shape != (b, oh, ow, c):
            raise ValueError(f"maxpool backward cache mismatch: {grad_out.shape} vs {(b, oh, ow, c)}")
        tiles = np.zeros((b, oh, ow, c, 4), dtype=grad_out.dtype)
        np.put_along_axis(tiles, idx[..., None], grad_out[..., None], axis=-1)
        grad_x = tiles.reshape(b, oh, ow, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(x_shape)
        return grad_x, {}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x)
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, grad_out, cache):
        return grad_out.reshape(cache), {}


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_dim, out_dim, rng=None):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = glorot_uniform((in_dim, out_dim), in_dim, out_dim, rng)
        self.bias = np.zeros(out_dim, dtype=np.float32)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def spec(self):
        return {"kind": self.kind, "in_dim": self.in_dim, "out_dim": self.out_dim}

    def cast_(self, dtype):
        self.weight = self.weight.astype(dtype)
        self.bias = self.bias.astype(dtype)

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"dense expects [B, {self.in_dim}], got {x.shape}")
        return x @ self.weight + self.bias, x

    def backward(self, grad_out, cache):
        x = cache
        return grad_out @ self.weight.T, {"weight": x.T @ grad_out, "bias": grad_out.sum(axis=0)}


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x)
        return np.maximum(x, 0), x > 0

    def backward(self, grad_out, cache):
        return grad_out * cache, {}


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x)
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out, out

    def backward(self, grad_out, cache):
        y = cache
        return grad_out * y * (1.0 - y), {}


class Softmax(Layer):
    """Softmax over the last axis, floored at PROB_FLOOR so logs never NaN."""

    kind = "softmax"

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x)
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        out = e / e.sum(axis=-1, keepdims=True)
        out = np.maximum(out, PROB_FLOOR)
        return out, out

    def backward(self, grad_out, cache):
        p = cache
        inner = (grad_out * p).sum(axis=-1, keepdims=True)
        return p * (grad_out - inner), {}


class Dropout(Layer):
    """Inverted dropout: kept units scale by 1/(1-rate) at training time only."""

    kind = "dropout"

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def spec(self):
        return {"kind": self.kind, "rate": self.rate}

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x)
        if not training or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ValueError("dropout in training mode needs a seeded generator")
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        mask = mask.astype(x.dtype)
        return x * mask, mask

    def backward(self, grad_out, cache):
        if cache is None:
            return grad_out, {}
        return grad_out * cache, {}


class Sequential:
    """A layer stack. `name_offset` shifts parameter names for composite models."""

    def __init__(self, layers, name_offset=0):
        self.layers = list(layers)
        self.name_offset = name_offset

    def forward(self, x, training=False, rng=None):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, training=training, rng=rng)
            caches.append(cache)
        return x, caches

    def _collect(self, i, layer_grads, grads):
        for key, g in layer_grads.items():
            grads[f"layer{self.name_offset + i}.{key}"] = g

    def backward(self, grad_out, caches):
        """Backpropagate through every layer, softmax included."""
        grads = {}
        for i in range(len(self.layers) - 1, -1, -1):
            grad_out, layer_grads = self.layers[i].backward(grad_out, caches[i])
            self._collect(i, layer_grads, grads)
        return grad_out, grads

    def backward_from_logits(self, grad_logits, caches):
        """Backpropagate a loss gradient taken w.r.t. pre-softmax logits."""
        if not isinstance(self.layers[-1], Softmax):
            raise ValueError("backward_from_logits requires a softmax final layer")
        grads = {}
        grad = grad_logits
        for i in range(len(self.layers) - 2, -1, -1):
            grad, layer_grads = self.layers[i].backward(grad, caches[i])
            self._collect(i, layer_grads, grads)
        return grad, grads

    def parameters(self):
        out = []
        for i, layer in enumerate(self.layers):
            for key, arr in layer.params().items():
                out.append((f"layer{self.name_offset + i}.{key}", arr))
        return out

    def cast_(self, dtype):
        for layer in self.layers:
            layer.cast_(dtype)

    def specs(self):
        return [layer.spec() for layer in self.layers]


def cross_entropy_loss(probs, labels):
    """Mean NLL of one-hot labels plus the gradient w.r.t. pre-softmax logits.

    The true-class probability is floored at 1e-12 before the log. The
    logits gradient of softmax cross-entropy is (probs - labels) / B.
    """
    p = np.asarray(probs)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 2:
        raise ValueError(f"probs {p.shape} and one-hot labels {y.shape} must match as [B, K]")
    row_sums = p.sum(axis=-1, dtype=np.float64)
    if np.abs(row_sums - 1.0).max() > 1e-5:
        raise ValueError("probability rows must sum to 1 within 1e-5")
    b = p.shape[0]
    picked = np.maximum((p * y).sum(axis=-1, dtype=np.float64), PROB_FLOOR)
    loss = float(-np.log(picked).sum() / b)
    grad_logits = (p - y) / b
    return loss, grad_logits


class SgdMomentum:
    """v <- momentum*v - lr*(g + weight_decay*w); w <- w + v. Updates in place."""

    def __init__(self, lr, momentum=0.9, weight_decay=0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {}

    def step(self, params, grads):
        for name, w in params:
            g = grads[name]
            if g.shape != w.shape:
                raise ValueError(f"{name}: gradient shape {g.shape} does not match {w.shape}")
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(w)
            g_eff = g + self.weight_decay * w if self.weight_decay else g
            v = self.momentum * v - self.lr * g_eff
            w += v.astype(w.dtype, copy=False)
            self.velocity[name] = v


def gradient_check(network, inputs, labels, epsilon=1e-3):
    """Max relative error between analytic and central-difference gradients.

    The network is deep-copied and cast to float64; every parameter is
    perturbed by +/-epsilon with the loss recomputed, and the analytic
    gradient from one backward pass is compared as
    |a - n| / max(|a|, |n|, 1e-8). Dropout is inactive (training=False).
    """
    net = copy.deepcopy(network)
    net.cast_(np.float64)
    if not isinstance(inputs, tuple):
        inputs = (inputs,)
    inputs = tuple(None if v is None else np.asarray(v, dtype=np.float64) for v in inputs)
    labels = np.asarray(labels, dtype=np.float64)

    probs, caches = net.forward(*inputs, training=False)
    _, grad_logits = cross_entropy_loss(probs, labels)
    _, grads = net.backward_from_logits(grad_logits, caches)

    def loss_now():
        p, _ = net.forward(*inputs, training=False)
        return cross_entropy_loss(p, labels)[0]

    max_rel = 0.0
    for name, arr in net.parameters():
        analytic = grads[name]
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + epsilon
            up = loss_now()
            arr[idx] = orig - epsilon
            down = loss_now()
            arr[idx] = orig
            numeric = (up - down) / (2.0 * epsilon)
            a = float(analytic[idx])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            if rel > max_rel:
                max_rel = rel
    return max_rel
