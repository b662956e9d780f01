"""Corpus manifests: the delimited index tying utterances to speakers.

One tab-separated line per utterance:

    utterance_id <TAB> speaker_id <TAB> gender <TAB> path <TAB> duration_seconds
"""

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, UsageError


@dataclass
class ManifestEntry:
    utt_id: str
    speaker_id: str
    gender: str
    path: str
    duration: float


def write_manifest(path, entries):
    with open(path, "w") as f:
        for e in entries:
            f.write(f"{e.utt_id}\t{e.speaker_id}\t{e.gender}\t{e.path}\t{e.duration:.6f}\n")


def read_manifest(path):
    entries = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 tab-separated fields")
            entries.append(ManifestEntry(parts[0], parts[1], parts[2], parts[3], float(parts[4])))
    return entries


def speakers_of(entries):
    seen = []
    for e in entries:
        if e.speaker_id not in seen:
            seen.append(e.speaker_id)
    return seen


def split_train_eval(entries, train_speakers, eval_speakers, seed=0):
    """Speaker-disjoint train/eval split, deterministic by seed."""
    speakers = sorted({e.speaker_id for e in entries})
    if train_speakers + eval_speakers > len(speakers):
        raise UsageError(f"split needs {train_speakers + eval_speakers} speakers, "
                         f"corpus has {len(speakers)}")
    rng = np.random.default_rng(seed)
    order = [speakers[i] for i in rng.permutation(len(speakers))]
    train_set = set(order[:train_speakers])
    eval_set = set(order[train_speakers:train_speakers + eval_speakers])
    train = [e for e in entries if e.speaker_id in train_set]
    evals = [e for e in entries if e.speaker_id in eval_set]
    return train, evals
