"""Typed save/load wrappers over the binary container."""

import numpy as np

from .backends import LdaTransform, PldaModel
from .container import read_container, write_container
from .e2e import BilinearScorer
from .frontend import FeatureMatrix
from .nn import Network


def save_features(path, feat):
    write_container(path, "features",
                    {"feature_kind": feat.kind, "frame_period": feat.frame_period},
                    {"frames": feat.frames.astype(np.float32)})


def load_features(path):
    _, header, arrays = read_container(path, expect_kind="features")
    return FeatureMatrix(arrays["frames"].astype(np.float64),
                         header["frame_period"], header["feature_kind"])


def save_vectors(path, kind, ids, speakers, matrix):
    """A vector set (one row per utterance) with its id/speaker tables."""
    write_container(path, kind, {"ids": list(ids), "speakers": list(speakers)},
                    {"vectors": np.asarray(matrix, dtype=np.float32)})


def load_vectors(path, kind=None):
    actual, header, arrays = read_container(path, expect_kind=kind)
    return header["ids"], header["speakers"], arrays["vectors"].astype(np.float64)


def save_network(path, net, kind="network"):
    arrays = {name: arr for name, arr in net.param_map().items()}
    write_container(path, kind, {"layers": net.specs(), "meta": net.meta}, arrays)


def load_network(path, kind="network"):
    _, header, arrays = read_container(path, expect_kind=kind)
    net = Network.from_specs(header["layers"], meta=header["meta"])
    net.set_params(arrays)
    return net


def save_e2e_model(path, net, scorer):
    arrays = {name: arr for name, arr in net.param_map().items()}
    arrays["scorer.S"] = scorer.S
    arrays["scorer.b"] = scorer.b
    write_container(path, "e2e_model", {"layers": net.specs(), "meta": net.meta}, arrays)


def load_e2e_model(path):
    _, header, arrays = read_container(path, expect_kind="e2e_model")
    scorer = BilinearScorer(arrays["scorer.S"].shape[0])
    scorer.S[...] = arrays["scorer.S"]
    scorer.b[...] = arrays["scorer.b"]
    net_params = {k: v for k, v in arrays.items() if not k.startswith("scorer.")}
    net = Network.from_specs(header["layers"], meta=header["meta"])
    net.set_params(net_params)
    return net, scorer


def save_lda(path, lda):
    write_container(path, "lda", {}, {"mean": lda.mean, "projection": lda.projection})


def load_lda(path):
    _, _, arrays = read_container(path, expect_kind="lda")
    return LdaTransform(mean=arrays["mean"], projection=arrays["projection"])


def save_plda(path, model, center_mean):
    """center_mean is the pre-normalization centering mean applied to inputs."""
    write_container(path, "plda", {},
                    {"mean": model.mean, "between": model.between,
                     "within": model.within, "center_mean": center_mean})


def load_plda(path):
    _, _, arrays = read_container(path, expect_kind="plda")
    return (PldaModel(arrays["mean"], arrays["between"], arrays["within"]),
            arrays["center_mean"])
