"""Minimal differentiable layer engine.

Networks are ordered stacks of layers operating on time-major matrices
(T x D). The layer vocabulary is fixed: affine, relu, time-delay frame
concatenation, and temporal mean pooling. Everything runs in float64 and
is deterministic given the seed, which keeps finite-difference gradient
checks meaningful.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, TrainingDivergedError, UsageError


class Affine:
    kind = "affine"

    def __init__(self, d_in, d_out, rng=None):
        self.d_in, self.d_out = int(d_in), int(d_out)
        if self.d_in <= 0 or self.d_out <= 0:
            raise ConfigError("affine dims must be positive")
        if rng is not None:
            bound = np.sqrt(6.0 / (self.d_in + self.d_out))
            self.W = rng.uniform(-bound, bound, size=(self.d_in, self.d_out))
        else:
            self.W = np.zeros((self.d_in, self.d_out))
        self.b = np.zeros(self.d_out)

    @property
    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x):
        return x @ self.W + self.b, x

    def backward(self, g, cache):
        x = cache
        return g @ self.W.T, {"W": x.T @ g, "b": g.sum(axis=0)}

    def spec(self):
        return {"kind": self.kind, "d_in": self.d_in, "d_out": self.d_out}


class ReLU:
    kind = "relu"
    params = {}

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, g, cache):
        return g * cache, {}

    def spec(self):
        return {"kind": self.kind}


class TimeDelay:
    """Frame concatenation at fixed offsets, with edge replication.

    Output frame t is the concatenation of input frames t+o for each
    offset o, so D_out = D_in * len(offsets). A symmetric -k..k offset
    list implements input splicing.
    """

    kind = "time_delay"
    params = {}

    def __init__(self, offsets):
        offsets = tuple(int(o) for o in offsets)
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise ConfigError("time_delay offsets must be strictly increasing")
        self.offsets = offsets

    def forward(self, x):
        t = x.shape[0]
        cols = [x[np.clip(np.arange(t) + o, 0, t - 1)] for o in self.offsets]
        return np.concatenate(cols, axis=1), (t, x.shape[1])

    def backward(self, g, cache):
        t, d = cache
        gx = np.zeros((t, d))
        for j, o in enumerate(self.offsets):
            idx = np.clip(np.arange(t) + o, 0, t - 1)
            np.add.at(gx, idx, g[:, j * d:(j + 1) * d])
        return gx, {}

    def spec(self):
        return {"kind": self.kind, "offsets": list(self.offsets)}


class MeanPool:
    """Temporal mean pooling: T x D -> 1 x D."""

    kind = "temporal_mean_pool"
    params = {}

    def forward(self, x):
        return x.mean(axis=0, keepdims=True), x.shape[0]

    def backward(self, g, cache):
        t = cache
        return np.repeat(g / t, t, axis=0), {}

    def spec(self):
        return {"kind": self.kind}


_LAYER_KINDS = {cls.kind: cls for cls in (Affine, ReLU, TimeDelay, MeanPool)}


def layer_from_spec(spec):
    kind = spec.get("kind")
    if kind == "affine":
        return Affine(spec["d_in"], spec["d_out"])
    if kind == "relu":
        return ReLU()
    if kind == "time_delay":
        return TimeDelay(spec["offsets"])
    if kind == "temporal_mean_pool":
        return MeanPool()
    raise ConfigError(f"unknown layer kind {kind!r}")


class Network:
    """Ordered layer stack with named parameters ("l{i}.{name}")."""

    def __init__(self, layers, meta=None):
        self.layers = list(layers)
        self.meta = dict(meta or {})

    def param_map(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                out[f"l{i}.{name}"] = arr
        return out

    def set_params(self, values):
        for name, arr in values.items():
            li, pname = name.split(".", 1)
            layer = self.layers[int(li[1:])]
            layer.params[pname][...] = arr

    def forward(self, x, up_to=None):
        """Run layers [0, up_to); returns (output, caches)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        caches = []
        stop = len(self.layers) if up_to is None else up_to
        for layer in self.layers[:stop]:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, grad_out, caches):
        """Gradient map over all parameters of the layers that ran forward."""
        grads = {}
        g = grad_out
        for i in reversed(range(len(caches))):
            g, pg = self.layers[i].backward(g, caches[i])
            for name, arr in pg.items():
                grads[f"l{i}.{name}"] = arr
        # layers past the cache (e.g. a bypassed head) still need entries
        for i in range(len(caches), len(self.layers)):
            for name, arr in self.layers[i].params.items():
                grads[f"l{i}.{name}"] = np.zeros_like(arr)
        return grads

    def specs(self):
        return [layer.spec() for layer in self.layers]

    @classmethod
    def from_specs(cls, specs, meta=None):
        return cls([layer_from_spec(s) for s in specs], meta=meta)


def effective_context(net_or_specs):
    """Temporal receptive field (frame count) of a layer stack.

    Computed from the time-delay offsets: the output at frame t depends on
    input frames [t + sum(min offsets), t + sum(max offsets)].
    """
    specs = net_or_specs.specs() if isinstance(net_or_specs, Network) else list(net_or_specs)
    left = right = 0
    for s in specs:
        if s["kind"] == "time_delay":
            left += min(s["offsets"])
            right += max(s["offsets"])
        if s["kind"] == "temporal_mean_pool":
            break
    return right - left + 1


def context_window(net_or_specs):
    """(left, right) frame extents of the receptive field around t."""
    specs = net_or_specs.specs() if isinstance(net_or_specs, Network) else list(net_or_specs)
    left = right = 0
    for s in specs:
        if s["kind"] == "time_delay":
            left += min(s["offsets"])
            right += max(s["offsets"])
        if s["kind"] == "temporal_mean_pool":
            break
    return left, right


def softmax_xent(logits, labels):
    """Row-wise softmax cross-entropy.

    Returns (mean loss, gradient w.r.t. logits). `labels` is an int array
    of class indices, one per row (a scalar for a single-row input).
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1:
        logits = logits[None, :]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    t, c = logits.shape
    if labels.shape[0] != t:
        raise UsageError("one label per logit row required")
    if labels.min() < 0 or labels.max() >= c:
        raise UsageError(f"label out of range for {c} classes")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(t), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(t), labels] -= 1.0
    return loss, grad / t


@dataclass
class TrainerConfig:
    learning_rate: float = 0.05
    lr_decay: float = 0.7
    lr_decay_interval: int = 2      # epochs between decays
    momentum: float = 0.9
    max_epochs: int = 10
    batch_size: int = 1
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")

    def lr_at(self, epoch):
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_decay_interval)


class SgdOptimizer:
    """SGD with momentum and global-norm gradient clipping; updates in place."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.velocity = {}

    def step(self, params, grads, lr=None):
        lr = self.cfg.learning_rate if lr is None else lr
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingDivergedError(f"non-finite gradient for {name}", where=name)
        total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        scale = 1.0
        if self.cfg.clip_norm > 0 and total > self.cfg.clip_norm:
            scale = self.cfg.clip_norm / total
        for name, p in params.items():
            g = grads[name] * scale
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(p)
                self.velocity[name] = v
            v *= self.cfg.momentum
            v -= lr * g
            p += v


def grad_check(params, compute_loss, analytic, step=1e-4):
    """Central finite-difference check of an analytic gradient map.

    `params` maps names to arrays that `compute_loss()` reads; each
    coordinate is perturbed in place. Returns {name: max relative error}.
    """
    report = {}
    for name, p in params.items():
        a = analytic[name]
        worst = 0.0
        flat = p.reshape(-1)
        aflat = np.asarray(a).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = compute_loss()
            flat[i] = orig - step
            lo = compute_loss()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * step)
            denom = max(abs(numeric), abs(aflat[i]), 1e-6)
            worst = max(worst, abs(numeric - aflat[i]) / denom)
        report[name] = worst
    return report
