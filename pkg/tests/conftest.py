import numpy as np
import pytest

from svbench.audio import AudioClip
from svbench.datagen import SyntheticSpec, generate_corpus


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """10-speaker synthetic corpus shared across tests; (entries, directory)."""
    out = tmp_path_factory.mktemp("corpus")
    spec = SyntheticSpec(num_speakers=10, utterances_per_speaker=5, seed=7)
    entries = generate_corpus(spec, str(out))
    return entries, str(out)


@pytest.fixture
def tone_clip():
    """1.0 s of a pure 1 kHz tone at 16 kHz."""
    t = np.arange(16000) / 16000.0
    return AudioClip(0.5 * np.sin(2 * np.pi * 1000.0 * t), 16000)


@pytest.fixture
def silence_clip():
    return AudioClip(np.zeros(16000), 16000)
