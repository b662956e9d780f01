import numpy as np
import pytest

from svbench import store
from svbench.backends import LdaTransform, PldaModel
from svbench.config import default_config, dump_config, load_config
from svbench.dvector import DVectorConfig, build_dvector_net
from svbench.e2e import E2EConfig, build_e2e_net
from svbench.errors import ConfigError, FormatError
from svbench.frontend import FeatureMatrix


def test_features_round_trip(tmp_path):
    feat = FeatureMatrix(np.random.default_rng(0).standard_normal((12, 5)),
                         0.01, "fbank5")
    path = tmp_path / "f.svbf"
    store.save_features(str(path), feat)
    again = store.load_features(str(path))
    # feature files store float32
    np.testing.assert_array_equal(again.frames, feat.frames.astype(np.float32))
    assert again.kind == feat.kind
    assert again.frame_period == feat.frame_period


def test_vectors_round_trip(tmp_path):
    mat = np.random.default_rng(1).standard_normal((3, 4))
    path = tmp_path / "v.svbf"
    store.save_vectors(str(path), "dvector", ["u1", "u2", "u3"],
                       ["s1", "s1", "s2"], mat)
    ids, speakers, got = store.load_vectors(str(path), kind="dvector")
    assert ids == ["u1", "u2", "u3"]
    assert speakers == ["s1", "s1", "s2"]
    np.testing.assert_array_equal(got, mat.astype(np.float32))


def test_network_round_trip(tmp_path):
    net = build_dvector_net(DVectorConfig(input_dim=8, conv_dim=16, bottleneck_dim=12,
                                          td_dim=16, feature_dim=16, num_speakers=5),
                            seed=3)
    path = tmp_path / "net.svbf"
    store.save_network(str(path), net, kind="dvector_net")
    again = store.load_network(str(path), kind="dvector_net")
    assert again.meta["model"] == "dvector"
    x = np.random.default_rng(4).standard_normal((10, 8))
    np.testing.assert_array_equal(net.forward(x)[0], again.forward(x)[0])


def test_network_kind_mismatch(tmp_path):
    net = build_dvector_net(DVectorConfig(input_dim=8, conv_dim=16, bottleneck_dim=12,
                                          td_dim=16, feature_dim=16, num_speakers=5))
    path = tmp_path / "net.svbf"
    store.save_network(str(path), net, kind="dvector_net")
    with pytest.raises(FormatError):
        store.load_network(str(path), kind="e2e_model")


def test_e2e_model_round_trip(tmp_path):
    cfg = E2EConfig(input_dim=8, lift_dim=12, nin_hidden=16, nin_out=12,
                    pre_pool_dim=10, embedding_dim=16)
    net, scorer = build_e2e_net(cfg, seed=5)
    rng = np.random.default_rng(6)
    scorer.S[...] = rng.standard_normal(scorer.S.shape)
    scorer.symmetrize()
    scorer.b[...] = 0.7
    path = tmp_path / "e2e.svbf"
    store.save_e2e_model(str(path), net, scorer)
    net2, scorer2 = store.load_e2e_model(str(path))
    np.testing.assert_array_equal(scorer2.S, scorer.S)
    np.testing.assert_array_equal(scorer2.b, scorer.b)
    x = rng.standard_normal((20, 8))
    np.testing.assert_array_equal(net.forward(x)[0], net2.forward(x)[0])


def test_lda_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    lda = LdaTransform(mean=rng.standard_normal(5), projection=rng.standard_normal((5, 2)))
    path = tmp_path / "lda.svbf"
    store.save_lda(str(path), lda)
    again = store.load_lda(str(path))
    x = rng.standard_normal((4, 5))
    np.testing.assert_array_equal(lda.transform(x), again.transform(x))


def test_plda_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    c = rng.standard_normal((3, 3))
    model = PldaModel(rng.standard_normal(3), c @ c.T, np.eye(3))
    center = rng.standard_normal(3)
    path = tmp_path / "plda.svbf"
    store.save_plda(str(path), model, center)
    again, got_center = store.load_plda(str(path))
    np.testing.assert_array_equal(got_center, center)
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    assert model.score(a, b) == again.score(a, b)


def test_config_defaults():
    cfg = load_config(None)
    assert cfg == default_config()
    assert cfg["frontend"]["num_mel_bins"] == 40
    assert cfg["e2e"]["pair_batch_n"] == 64


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nseed = 5\n\n[datagen]\nnum_speakers = 12\n"
                    "utterance_secs = 1.5,3.5\n")
    cfg = load_config(str(path), overrides={("run", "seed"): 9})
    assert cfg["run"]["seed"] == 9
    assert cfg["datagen"]["num_speakers"] == 12
    assert cfg["datagen"]["utterance_secs"] == (1.5, 3.5)


def test_config_unknown_section(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[nonsense]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_config_unknown_key(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nbogus = 1\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_config_bad_value(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[run]\nseed = apple\n")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_dump_config_round_trip(tmp_path):
    cfg = load_config(None, overrides={("datagen", "num_speakers"): 33})
    text = dump_config(cfg)
    path = tmp_path / "dump.ini"
    path.write_text(text)
    again = load_config(str(path))
    assert again == cfg
    assert dump_config(again) == text
