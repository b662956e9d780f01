"""Feature-learning pipeline: speaker-classifier network and d-vectors.

The network stacks a convolutional stage and two time-delay stages over
spliced filterbank input, with a bottleneck in between and a linear
feature layer in front of the softmax head. Frame-level features are
read from the feature layer and averaged into utterance d-vectors.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import TrainingDivergedError, UsageError
from .nn import Affine, Network, SgdOptimizer, effective_context, softmax_xent


@dataclass
class DVectorConfig:
    input_dim: int = 40
    splice_context: int = 4
    conv_kernels: tuple = (2, 1)       # time-kernel sizes of the conv stage
    conv_dim: int = 256
    bottleneck_dim: int = 256
    td_offsets: tuple = ((-3, 0, 3), (-2, 0, 2))
    td_dim: int = 256
    feature_dim: int = 400
    num_speakers: int = 5000

    def __post_init__(self):
        if self.num_speakers < 2:
            raise UsageError("need at least 2 speakers")


def dvector_specs(cfg):
    """Layer spec list for the classifier network (feature layer + head last)."""
    specs = []
    d = cfg.input_dim
    k = cfg.splice_context
    if k > 0:
        specs.append({"kind": "time_delay", "offsets": list(range(-k, k + 1))})
        d *= 2 * k + 1
    for kernel in cfg.conv_kernels:
        if kernel > 1:
            specs.append({"kind": "time_delay", "offsets": list(range(kernel))})
            d *= kernel
        specs.append({"kind": "affine", "d_in": d, "d_out": cfg.conv_dim})
        specs.append({"kind": "relu"})
        d = cfg.conv_dim
    specs.append({"kind": "affine", "d_in": d, "d_out": cfg.bottleneck_dim})
    d = cfg.bottleneck_dim
    for offsets in cfg.td_offsets:
        specs.append({"kind": "time_delay", "offsets": list(offsets)})
        d *= len(offsets)
        specs.append({"kind": "affine", "d_in": d, "d_out": cfg.td_dim})
        specs.append({"kind": "relu"})
        d = cfg.td_dim
    specs.append({"kind": "affine", "d_in": d, "d_out": cfg.feature_dim})  # feature layer, linear
    specs.append({"kind": "affine", "d_in": cfg.feature_dim, "d_out": cfg.num_speakers})
    return specs


def initialize_network(net, seed):
    rng = np.random.default_rng(seed)
    for layer in net.layers:
        if isinstance(layer, Affine):
            bound = np.sqrt(6.0 / (layer.d_in + layer.d_out))
            layer.W[...] = rng.uniform(-bound, bound, size=layer.W.shape)
            layer.b[...] = 0.0
    return net


def build_dvector_net(cfg, seed=0):
    specs = dvector_specs(cfg)
    ctx = effective_context(specs)
    if ctx != 20:
        warnings.warn(f"d-vector receptive field is {ctx} frames, not the standard 20")
    net = Network.from_specs(specs, meta={
        "model": "dvector",
        "input_dim": cfg.input_dim,
        "feature_dim": cfg.feature_dim,
        "num_speakers": cfg.num_speakers,
        "effective_context": ctx,
        "seed": seed,
    })
    return initialize_network(net, seed)


def train_dvector(utterances, cfg, tcfg, log=None):
    """Train the speaker classifier on per-frame labels.

    `utterances` is a list of (frames T x input_dim, speaker_index) pairs;
    every frame of an utterance carries its speaker's label. Returns the
    trained Network; the per-epoch (loss, frame accuracy) history lands in
    net.meta["history"].
    """
    if len({label for _, label in utterances}) < 2:
        raise UsageError("training corpus must contain at least 2 speakers")
    net = build_dvector_net(cfg, seed=tcfg.seed)
    opt = SgdOptimizer(tcfg)
    params = net.param_map()
    order_rng = np.random.default_rng(tcfg.seed + 1)
    history = []
    for epoch in range(tcfg.max_epochs):
        order = order_rng.permutation(len(utterances))
        lr = tcfg.lr_at(epoch)
        total_loss = 0.0
        correct = 0
        frames = 0
        for i in order:
            x, label = utterances[i]
            logits, caches = net.forward(x)
            labels = np.full(logits.shape[0], label, dtype=np.int64)
            loss, grad = softmax_xent(logits, labels)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}", where=epoch)
            grads = net.backward(grad, caches)
            opt.step(params, grads, lr=lr)
            total_loss += loss * logits.shape[0]
            correct += int(np.sum(logits.argmax(axis=1) == label))
            frames += logits.shape[0]
        history.append({"epoch": epoch, "loss": total_loss / frames, "accuracy": correct / frames})
        if log:
            log(history[-1])
    net.meta["history"] = history
    return net


def extract_frame_features(net, feat):
    """Feature-layer activations for every frame; softmax head bypassed."""
    if net.meta.get("model") != "dvector":
        raise UsageError("network is not a d-vector model")
    frames = feat.frames if hasattr(feat, "frames") else np.asarray(feat, dtype=np.float64)
    if frames.shape[1] != net.meta["input_dim"]:
        raise UsageError(f"feature dim {frames.shape[1]} != model input dim {net.meta['input_dim']}")
    out, _ = net.forward(frames, up_to=len(net.layers) - 1)
    return out


def pool_dvector(frame_features):
    """Average frame-level features over time into one d-vector."""
    frame_features = np.asarray(frame_features, dtype=np.float64)
    if frame_features.ndim != 2 or frame_features.shape[0] < 1:
        raise UsageError("need a non-empty T x F feature sequence")
    return frame_features.mean(axis=0)


def dvector_context(cfg):
    return effective_context(dvector_specs(cfg))
