"""Pairwise end-to-end pipeline: NIN embedding network + bilinear scorer.

The embedding network runs spliced filterbank frames through three
time-delay NIN blocks, projects to the pre-pooling width, mean-pools over
time, and maps the pooled statistic through one more NIN block to the
speaker embedding. A bilinear scorer turns two embeddings into a
same-speaker logit; training minimizes weighted pairwise cross-entropy
over batches of N same-speaker and N(N-1) different-speaker chunk pairs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SamplingError, TrainingDivergedError, UsageError
from .nn import Network, SgdOptimizer, effective_context
from .dvector import initialize_network

CHUNK_LEN_MIN = 50
CHUNK_LEN_MAX = 300


@dataclass
class E2EConfig:
    input_dim: int = 40
    splice_context: int = 1
    lift_dim: int = 150            # width entering NIN-1 (spliced input lifted by an affine)
    nin_hidden: int = 1000
    nin_out: int = 500
    td_offsets: tuple = ((-3, 0, 3), (-2, 0, 2), (-2, 0, 2))
    pre_pool_dim: int = 150
    embedding_dim: int = 200
    expected_context: int | None = 17

    def __post_init__(self):
        if min(self.lift_dim, self.nin_hidden, self.nin_out,
               self.pre_pool_dim, self.embedding_dim) <= 0:
            raise ConfigError("all e2e dims must be positive")


def _nin_specs(d_in, hidden, out):
    return [
        {"kind": "affine", "d_in": d_in, "d_out": hidden}, {"kind": "relu"},
        {"kind": "affine", "d_in": hidden, "d_out": hidden}, {"kind": "relu"},
        {"kind": "affine", "d_in": hidden, "d_out": out}, {"kind": "relu"},
    ]


def e2e_specs(cfg):
    specs = []
    d = cfg.input_dim
    k = cfg.splice_context
    if k > 0:
        specs.append({"kind": "time_delay", "offsets": list(range(-k, k + 1))})
        d *= 2 * k + 1
    specs.append({"kind": "affine", "d_in": d, "d_out": cfg.lift_dim})
    d = cfg.lift_dim
    for offsets in cfg.td_offsets:
        specs.append({"kind": "time_delay", "offsets": list(offsets)})
        specs.extend(_nin_specs(d * len(offsets), cfg.nin_hidden, cfg.nin_out))
        d = cfg.nin_out
    specs.append({"kind": "affine", "d_in": d, "d_out": cfg.pre_pool_dim})
    specs.append({"kind": "temporal_mean_pool"})
    specs.extend(_nin_specs(cfg.pre_pool_dim, cfg.nin_hidden, cfg.nin_out))
    specs.append({"kind": "affine", "d_in": cfg.nin_out, "d_out": cfg.embedding_dim})
    return specs


class BilinearScorer:
    """Same-speaker logit L(x, y) = x.y - x'Sx - y'Sy + b, S kept symmetric."""

    def __init__(self, dim):
        self.dim = int(dim)
        self.S = np.zeros((self.dim, self.dim))
        self.b = np.zeros(1)

    def param_map(self):
        return {"scorer.S": self.S, "scorer.b": self.b}

    def symmetrize(self):
        self.S[...] = 0.5 * (self.S + self.S.T)

    def score(self, x, y):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if x.shape != (self.dim,) or y.shape != (self.dim,):
            raise UsageError(f"embedding dim mismatch: scorer expects {self.dim}")
        # quadratic terms grouped so score(x, y) == score(y, x) bit-exactly
        return float(x @ y - (x @ self.S @ x + y @ self.S @ y) + self.b[0])

    def grads(self, x, y):
        """(dL/dx, dL/dy, dL/dS, dL/db) treating S as a free matrix."""
        s2 = self.S + self.S.T
        return y - s2 @ x, x - s2 @ y, -(np.outer(x, x) + np.outer(y, y)), np.ones(1)


def build_e2e_net(cfg, seed=0):
    specs = e2e_specs(cfg)
    ctx = effective_context(specs)
    if cfg.expected_context is not None and ctx != cfg.expected_context:
        raise ConfigError(f"receptive field {ctx} frames, expected {cfg.expected_context}")
    net = Network.from_specs(specs, meta={
        "model": "e2e",
        "input_dim": cfg.input_dim,
        "embedding_dim": cfg.embedding_dim,
        "effective_context": ctx,
        "seed": seed,
    })
    return initialize_network(net, seed), BilinearScorer(cfg.embedding_dim)


def calibrate_network(net, sample_chunks, embedding_scale=0.3):
    """Data-dependent init: center and unit-scale every affine's outputs.

    A deep rectifier stack under plain fan-based init collapses the
    input-dependent variation into a common positive component, leaving
    near-constant embeddings and a flat pairwise loss. Rescaling each
    affine on sample data keeps per-unit activations zero-mean and
    unit-variance so pair training has signal from the start.

    The last affine is additionally shrunk by `embedding_scale`: with
    unit-variance embeddings the bilinear logits start out saturated
    (spread ~ sqrt(dim)), and the only cheap descent direction from there
    is shrinking all embeddings to the zero-logit fixed point, where
    gradients vanish and training stalls. Starting with O(1) logits keeps
    the sigmoids responsive.
    """
    from .nn import Affine
    affines = [layer for layer in net.layers if isinstance(layer, Affine)]
    for i, layer in enumerate(net.layers):
        if isinstance(layer, Affine):
            rows = []
            for chunk in sample_chunks:
                h, _ = net.forward(chunk, up_to=i)
                rows.append(h)
            h = np.concatenate(rows, axis=0)
            z = h @ layer.W + layer.b
            std = z.std(axis=0)
            std[std < 1e-8] = 1.0
            layer.W /= std
            layer.b[...] = (layer.b - z.mean(axis=0)) / std
    affines[-1].W *= embedding_scale
    affines[-1].b *= embedding_scale
    return net


def score_pair(scorer, x, y):
    return scorer.score(x, y)


def pair_probability(logit):
    """Logistic sigmoid, stable for large |logit|."""
    logit = np.asarray(logit, dtype=np.float64)
    out = np.empty_like(logit, dtype=np.float64)
    pos = logit >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logit[pos]))
    ez = np.exp(logit[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


@dataclass
class E2ELossConfig:
    k: float = 1.0 / 63.0          # balance weight on the different-speaker set

    def __post_init__(self):
        if self.k <= 0:
            raise ConfigError("balance weight must be positive")


def pair_loss(same_logits, diff_logits, loss_cfg):
    """Weighted pairwise cross-entropy in the log domain.

    E = -sum ln P(same) - K sum ln(1 - P(diff)); returns
    (E, dE/d same_logits, dE/d diff_logits).
    """
    same = np.asarray(same_logits, dtype=np.float64)
    diff = np.asarray(diff_logits, dtype=np.float64)
    k = loss_cfg.k
    loss = float(np.sum(np.logaddexp(0.0, -same)) + k * np.sum(np.logaddexp(0.0, diff)))
    g_same = pair_probability(same) - 1.0
    g_diff = k * pair_probability(diff)
    return loss, np.atleast_1d(g_same), np.atleast_1d(g_diff)


def sample_chunk_length(rng, lo=CHUNK_LEN_MIN, hi=CHUNK_LEN_MAX):
    """Log-uniform chunk length in [lo, hi] frames."""
    return min(int(np.exp(rng.uniform(np.log(lo), np.log(hi + 1)))), hi)


@dataclass
class PairBatch:
    chunks: list                    # 2N feature chunks (T x D); chunk 2i, 2i+1 belong to speaker i
    speakers: list                  # speaker id per chunk
    same_pairs: list                # N (i, j) index pairs, same speaker
    diff_pairs: list                # N(N-1) ordered (i, j) index pairs, different speakers

    def __post_init__(self):
        n = len(self.same_pairs)
        if len(self.diff_pairs) != n * (n - 1):
            raise UsageError("diff pair count must be N(N-1)")
        for i, j in self.same_pairs:
            if self.speakers[i] != self.speakers[j]:
                raise UsageError("same pair spans two speakers")
        for i, j in self.diff_pairs:
            if self.speakers[i] == self.speakers[j]:
                raise UsageError("diff pair shares a speaker")

    @property
    def n(self):
        return len(self.same_pairs)


def _cut_chunk(frames, length, rng):
    t = frames.shape[0]
    if t <= length:
        return frames
    start = int(rng.integers(0, t - length + 1))
    return frames[start:start + length]


def sample_pair_batch(corpus, n, rng, chunk_bounds=(CHUNK_LEN_MIN, CHUNK_LEN_MAX)):
    """Draw N same-speaker pairs plus the N(N-1) cross pairs of their first chunks.

    `corpus` maps speaker id -> list of utterance feature matrices. Each
    speaker contributes two chunks cut from distinct utterances when it
    has more than one.
    """
    speakers = sorted(corpus)
    if len(speakers) < n:
        raise SamplingError(f"need at least {n} speakers, corpus has {len(speakers)}")
    chosen = [speakers[i] for i in rng.choice(len(speakers), size=n, replace=False)]
    chunks, chunk_speakers = [], []
    for spk in chosen:
        utts = corpus[spk]
        if len(utts) >= 2:
            ia, ib = rng.choice(len(utts), size=2, replace=False)
        else:
            ia = ib = 0
        for ui in (ia, ib):
            length = sample_chunk_length(rng, *chunk_bounds)
            chunks.append(_cut_chunk(utts[int(ui)], length, rng))
            chunk_speakers.append(spk)
    same_pairs = [(2 * i, 2 * i + 1) for i in range(n)]
    diff_pairs = [(2 * i, 2 * j) for i in range(n) for j in range(n) if j != i]
    return PairBatch(chunks, chunk_speakers, same_pairs, diff_pairs)


def embed(net, chunk):
    """Embedding vector for one feature chunk."""
    frames = chunk.frames if hasattr(chunk, "frames") else np.asarray(chunk, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise UsageError("chunk must be a non-empty T x D matrix")
    out, _ = net.forward(frames)
    return out[0]


def _batch_step(net, scorer, batch, loss_cfg):
    """Loss and full gradient map (network + scorer) for one pair batch."""
    embeddings, caches = [], []
    for chunk in batch.chunks:
        out, cache = net.forward(chunk)
        embeddings.append(out[0])
        caches.append(cache)
    same_logits = np.array([scorer.score(embeddings[i], embeddings[j])
                            for i, j in batch.same_pairs])
    diff_logits = np.array([scorer.score(embeddings[i], embeddings[j])
                            for i, j in batch.diff_pairs])
    loss, g_same, g_diff = pair_loss(same_logits, diff_logits, loss_cfg)

    demb = [np.zeros_like(e) for e in embeddings]
    grad_s = np.zeros_like(scorer.S)
    grad_b = np.zeros(1)
    for (i, j), g in zip(batch.same_pairs, g_same):
        gx, gy, gs, gb = scorer.grads(embeddings[i], embeddings[j])
        demb[i] += g * gx
        demb[j] += g * gy
        grad_s += g * gs
        grad_b += g * gb
    for (i, j), g in zip(batch.diff_pairs, g_diff):
        gx, gy, gs, gb = scorer.grads(embeddings[i], embeddings[j])
        demb[i] += g * gx
        demb[j] += g * gy
        grad_s += g * gs
        grad_b += g * gb

    grads = None
    for cache, g in zip(caches, demb):
        chunk_grads = net.backward(g[None, :], cache)
        if grads is None:
            grads = chunk_grads
        else:
            for name in grads:
                grads[name] += chunk_grads[name]
    grads["scorer.S"] = grad_s
    grads["scorer.b"] = grad_b
    return loss, grads, same_logits, diff_logits


def train_e2e(corpus, cfg, loss_cfg, tcfg, n_pairs=64, iterations=200, log=None):
    """Train embedding network and scorer jointly on sampled pair batches.

    Returns (net, scorer); the per-iteration loss history lands in
    net.meta["history"].
    """
    net, scorer = build_e2e_net(cfg, seed=tcfg.seed)
    rng = np.random.default_rng(tcfg.seed + 2)
    warmup = sample_pair_batch(corpus, min(n_pairs, len(corpus)), rng)
    calibrate_network(net, warmup.chunks)
    opt = SgdOptimizer(tcfg)
    params = dict(net.param_map())
    params.update(scorer.param_map())
    history = []
    for it in range(iterations):
        batch = sample_pair_batch(corpus, n_pairs, rng)
        loss, grads, same_logits, diff_logits = _batch_step(net, scorer, batch, loss_cfg)
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}", where=it)
        opt.step(params, grads, lr=tcfg.lr_at(it))
        scorer.symmetrize()
        acc = 0.5 * (np.mean(same_logits > 0) + np.mean(diff_logits <= 0))
        history.append({"iteration": it, "loss": loss, "pair_accuracy": float(acc)})
        if log:
            log(history[-1])
    net.meta["history"] = history
    return net, scorer


def verify_pair(net, scorer, enroll_feat, test_feat):
    """Same-speaker logit for an (enrollment, test) feature pair."""
    return scorer.score(embed(net, enroll_feat), embed(net, test_feat))
