"""Trial construction and equal-error-rate computation.

Conditions follow the C(enroll-test) convention: enrollment material of a
given duration per speaker against fixed-length test segments, with
trials restricted to gender-matched pairs and pooled for a single EER.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError

MIN_SEGMENT_SECS = 0.1             # shortest cut worth featurizing


@dataclass
class Segment:
    """A slice of a source utterance used as one side of a trial."""
    seg_id: str
    speaker_id: str
    gender: str
    utt_id: str
    start: float
    duration: float


@dataclass
class Trial:
    enroll_id: str
    test_id: str
    label: str                     # "target" | "nontarget"
    gender: str = ""


@dataclass
class TrialList:
    condition: str
    enroll_secs: float
    test_secs: float
    trials: list
    enroll_segments: dict = field(default_factory=dict)   # enroll_id -> [Segment]
    test_segments: dict = field(default_factory=dict)     # test_id -> Segment


def build_conditions(entries, enroll_secs, test_secs, condition=None):
    """Build a gender-matched trial list from an evaluation manifest.

    Enrollment per speaker concatenates its first utterances up to
    enroll_secs; the remaining utterances supply test segments cut to
    test_secs. Speakers lacking material for enrollment plus one test are
    excluded with a warning.
    """
    condition = condition or f"C({enroll_secs:g}-{test_secs:g})"
    by_speaker = {}
    for e in entries:
        by_speaker.setdefault(e.speaker_id, []).append(e)
    enroll_segments = {}
    test_segments = {}
    speaker_gender = {}
    for spk in sorted(by_speaker):
        utts = sorted(by_speaker[spk], key=lambda e: e.utt_id)
        segs = []
        remaining = enroll_secs
        used = 0
        for e in utts:
            if remaining <= 0:
                break
            take = min(e.duration, remaining)
            # keep every cut at least MIN_SEGMENT_SECS so no segment falls
            # below one analysis frame: trim this cut rather than leaving a
            # sliver for the next utterance
            if 0.0 < remaining - take < MIN_SEGMENT_SECS:
                take = remaining - MIN_SEGMENT_SECS
            segs.append(Segment(f"{spk}-enroll", spk, e.gender, e.utt_id, 0.0, take))
            remaining -= take
            used += 1
        tests = [e for e in utts[used:] if e.duration >= test_secs]
        if remaining > 1e-9 or not tests:
            warnings.warn(f"speaker {spk} lacks material for {condition}; excluded")
            continue
        enroll_segments[f"{spk}-enroll"] = segs
        speaker_gender[spk] = utts[0].gender
        for e in tests:
            test_segments[e.utt_id] = Segment(e.utt_id, spk, e.gender, e.utt_id, 0.0, test_secs)
    trials = []
    for enroll_id in sorted(enroll_segments):
        espk = enroll_segments[enroll_id][0].speaker_id
        egender = speaker_gender[espk]
        for test_id in sorted(test_segments):
            seg = test_segments[test_id]
            if seg.gender != egender:
                continue
            label = "target" if seg.speaker_id == espk else "nontarget"
            trials.append(Trial(enroll_id, test_id, label, egender))
    return TrialList(condition, enroll_secs, test_secs, trials, enroll_segments, test_segments)


@dataclass
class EvalReport:
    eer: float                     # percent
    threshold: float
    num_target: int
    num_nontarget: int


def _rates(target, nontarget, threshold):
    fa = np.mean(nontarget >= threshold)
    miss = np.mean(target < threshold)
    return fa, miss


def compute_eer(scores, labels):
    """EER with linear interpolation at the false-accept / miss crossing.

    `labels` holds "target"/"nontarget" strings (or booleans, True =
    target). Scores >= threshold count as accepts.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise UsageError("scores must be finite")
    is_target = np.array([l == "target" if isinstance(l, str) else bool(l) for l in labels],
                         dtype=bool)
    target = scores[is_target]
    nontarget = scores[~is_target]
    if len(target) == 0 or len(nontarget) == 0:
        raise UsageError("need at least one target and one nontarget trial")

    # candidate thresholds: every score, plus one past the top so miss can hit 1
    cands = np.unique(scores)
    cands = np.append(cands, cands[-1] + 1.0)
    fa = np.array([np.mean(nontarget >= t) for t in cands])
    miss = np.array([np.mean(target < t) for t in cands])
    diff = fa - miss               # monotone non-increasing in the threshold
    idx = int(np.searchsorted(-diff, 0.0, side="left"))
    if idx == 0:
        eer, thr = 0.5 * (fa[0] + miss[0]), cands[0]
    elif idx >= len(cands):
        eer, thr = 0.5 * (fa[-1] + miss[-1]), cands[-1]
    elif diff[idx] == 0.0:
        eer, thr = fa[idx], cands[idx]
    else:
        lo, hi = idx - 1, idx
        denom = (fa[lo] - miss[lo]) - (fa[hi] - miss[hi])
        s = (fa[lo] - miss[lo]) / denom
        eer = fa[lo] + s * (fa[hi] - fa[lo])
        thr = cands[lo] + s * (cands[hi] - cands[lo])
    return EvalReport(eer=float(eer * 100.0), threshold=float(thr),
                      num_target=len(target), num_nontarget=len(nontarget))


def write_score_file(path, records):
    """records: iterable of (enroll_id, test_id, score, label)."""
    with open(path, "w") as f:
        for enroll_id, test_id, score, label in records:
            f.write(f"{enroll_id}\t{test_id}\t{score!r}\t{label}\n")


def read_score_file(path):
    records = []
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            enroll_id, test_id, score, label = line.split("\t")
            records.append((enroll_id, test_id, float(score), label))
    return records


def write_trial_file(path, trials):
    with open(path, "w") as f:
        for t in trials:
            f.write(f"{t.enroll_id}\t{t.test_id}\t{t.label}\n")


def read_trial_file(path):
    trials = []
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            enroll_id, test_id, label = line.split("\t")
            trials.append(Trial(enroll_id, test_id, label))
    return trials


def write_segments_file(path, trial_list):
    """Segment definitions backing a trial list, one TSV row per slice."""
    with open(path, "w") as f:
        f.write(f"#condition\t{trial_list.condition}\t{trial_list.enroll_secs:g}"
                f"\t{trial_list.test_secs:g}\n")
        for seg_id in sorted(trial_list.enroll_segments):
            for s in trial_list.enroll_segments[seg_id]:
                f.write(f"enroll\t{s.seg_id}\t{s.speaker_id}\t{s.gender}\t{s.utt_id}"
                        f"\t{s.start:.6f}\t{s.duration:.6f}\n")
        for seg_id in sorted(trial_list.test_segments):
            s = trial_list.test_segments[seg_id]
            f.write(f"test\t{s.seg_id}\t{s.speaker_id}\t{s.gender}\t{s.utt_id}"
                    f"\t{s.start:.6f}\t{s.duration:.6f}\n")


def read_segments_file(path):
    """Returns (condition, enroll_segments, test_segments)."""
    condition = ""
    enroll_segments = {}
    test_segments = {}
    with open(path) as f:
        for line in f:
            parts = line.rstrip("\n").split("\t")
            if not parts or not parts[0]:
                continue
            if parts[0] == "#condition":
                condition = parts[1]
                continue
            kind, seg_id, speaker_id, gender, utt_id, start, dur = parts
            seg = Segment(seg_id, speaker_id, gender, utt_id, float(start), float(dur))
            if kind == "enroll":
                enroll_segments.setdefault(seg_id, []).append(seg)
            else:
                test_segments[seg_id] = seg
    return condition, enroll_segments, test_segments


def emit_report(results):
    """Render per-system, per-condition EERs.

    `results` maps (system, scoring) -> {condition: EvalReport}. Returns
    (formatted table string, tab-delimited summary lines).
    """
    conditions = sorted({c for per in results.values() for c in per})
    header = ["System", "Scoring"] + conditions
    rows = []
    for (system, scoring) in results:
        per = results[(system, scoring)]
        cells = [f"{per[c].eer:.2f}" if c in per else "-" for c in conditions]
        rows.append([system, scoring] + cells)
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    tsv = ["\t".join(header)] + ["\t".join(r) for r in rows]
    return "\n".join(lines) + "\n", "\n".join(tsv) + "\n"
