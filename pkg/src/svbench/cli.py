"""Command-line entry point: one binary, one subcommand per pipeline stage."""

import dataclasses
import os
import sys

import click
import numpy as np

from . import config as config_mod
from . import pipeline, store
from .backends import center_and_length_normalize, fit_lda, fit_plda
from .container import read_container
from .corpus import read_manifest, split_train_eval, write_manifest
from .datagen import SyntheticSpec, generate_corpus
from .dvector import (DVectorConfig, extract_frame_features, pool_dvector,
                      train_dvector)
from .e2e import E2EConfig, E2ELossConfig, embed, train_e2e
from .errors import SvbenchError
from .evaluation import (build_conditions, compute_eer, emit_report,
                         read_score_file, read_segments_file, read_trial_file,
                         write_score_file, write_segments_file,
                         write_trial_file)
from .gradcheck import TOLERANCE
from .nn import TrainerConfig


class Workspace:
    def __init__(self, cfg):
        self.cfg = cfg
        self.out_dir = cfg["run"]["out_dir"]
        self.seed = cfg["run"]["seed"]

    def prepare(self):
        os.makedirs(self.out_dir, exist_ok=True)
        with open(os.path.join(self.out_dir, "config.resolved.ini"), "w") as f:
            f.write(config_mod.dump_config(self.cfg))

    def path(self, *parts):
        return os.path.join(self.out_dir, *parts)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Run configuration file (INI sections per module).")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--out-dir", type=click.Path(), default=None, help="Override the output directory.")
@click.pass_context
def main(ctx, config_path, seed, out_dir):
    """Speaker verification workbench: synthetic corpus, two deep SV
    pipelines, and EER evaluation."""
    overrides = {}
    if seed is not None:
        overrides[("run", "seed")] = seed
    if out_dir is not None:
        overrides[("run", "out_dir")] = out_dir
    try:
        cfg = config_mod.load_config(config_path, overrides)
    except SvbenchError as e:
        raise click.ClickException(str(e))
    ctx.obj = Workspace(cfg)


def _fail(message):
    raise click.ClickException(message)


def _trainer_config(cfg, seed):
    t = cfg["trainer"]
    return TrainerConfig(learning_rate=t["learning_rate"], lr_decay=t["lr_decay"],
                         lr_decay_interval=t["lr_decay_interval"], momentum=t["momentum"],
                         max_epochs=t["max_epochs"], clip_norm=t["clip_norm"], seed=seed)


@main.command("gen-data")
@click.pass_obj
def gen_data(ws):
    """Generate the synthetic corpus (plus train/eval split if configured)."""
    ws.prepare()
    d = ws.cfg["datagen"]
    spec = SyntheticSpec(num_speakers=d["num_speakers"],
                         utterances_per_speaker=d["utterances_per_speaker"],
                         utterance_secs=d["utterance_secs"],
                         sample_rate=d["sample_rate"],
                         separability=d["separability"],
                         noise_level=d["noise_level"],
                         seed=ws.seed)
    corpus_dir = ws.path("corpus")
    entries = generate_corpus(spec, corpus_dir)
    click.echo(f"wrote {len(entries)} utterances to {corpus_dir}")
    if d["train_speakers"] > 0 or d["eval_speakers"] > 0:
        train, evals = split_train_eval(entries, d["train_speakers"],
                                        d["eval_speakers"], seed=ws.seed)
        write_manifest(ws.path("train.tsv"), train)
        write_manifest(ws.path("eval.tsv"), evals)
        click.echo(f"split: {d['train_speakers']} train / {d['eval_speakers']} eval speakers")


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--feature-type", type=click.Choice(["fbank", "mfcc"]), default="fbank")
@click.option("--cmvn/--no-cmvn", "apply_cmvn", default=True,
              help="--no-cmvn skips utterance normalization (the e2e model "
                   "pools over time, so the utterance mean is its main cue).")
@click.option("--name", "dir_name", default="feats",
              help="Subdirectory of the output dir to write features into.")
@click.pass_obj
def featurize(ws, manifest, feature_type, apply_cmvn, dir_name):
    """Extract features for every utterance in a manifest."""
    ws.prepare()
    entries = read_manifest(manifest)
    fcfg = pipeline.make_frontend_config(ws.cfg)
    if not apply_cmvn:
        fcfg = dataclasses.replace(fcfg, cmvn_mode="none")
    feats_dir = ws.path(dir_name)
    if feature_type == "fbank":
        pipeline.featurize_entries(entries, fcfg, feats_dir)
    else:
        from .audio import read_wav
        from .frontend import add_deltas, cmvn, compute_mfcc_e
        os.makedirs(feats_dir, exist_ok=True)
        for e in entries:
            clip = read_wav(e.path)
            feat = add_deltas(compute_mfcc_e(clip, fcfg))
            if fcfg.cmvn_mode == "per-utterance" and feat.num_frames >= 2:
                feat = cmvn(feat)
            store.save_features(os.path.join(feats_dir, f"{e.utt_id}.svbf"), feat)
    click.echo(f"featurized {len(entries)} utterances into {feats_dir}")


@main.command("train-dvector")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--features", "feats_dir", required=True, type=click.Path(exists=True))
@click.pass_obj
def cmd_train_dvector(ws, manifest, feats_dir):
    """Train the speaker-classifier network on per-frame labels."""
    ws.prepare()
    entries = read_manifest(manifest)
    feats = pipeline.load_feature_dir(entries, feats_dir)
    utts, speakers = pipeline.labelled_utterances(entries, feats)
    dv = ws.cfg["dvector"]
    cfg = DVectorConfig(input_dim=ws.cfg["frontend"]["num_mel_bins"],
                        conv_dim=dv["conv_dim"], bottleneck_dim=dv["bottleneck_dim"],
                        td_dim=dv["td_dim"], feature_dim=dv["feature_dim"],
                        num_speakers=len(speakers))
    log_path = ws.path("dvector_train.log")
    with open(log_path, "w") as log:
        log.write("epoch\tloss\taccuracy\n")
        net = train_dvector(utts, cfg, _trainer_config(ws.cfg, ws.seed),
                            log=lambda h: log.write(f"{h['epoch']}\t{h['loss']!r}\t{h['accuracy']!r}\n"))
    net.meta["speakers"] = speakers
    store.save_network(ws.path("dvector.svbf"), net, kind="dvector_net")
    click.echo(f"trained d-vector model on {len(speakers)} speakers -> {ws.path('dvector.svbf')}")


@main.command("train-e2e")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--features", "feats_dir", required=True, type=click.Path(exists=True))
@click.pass_obj
def cmd_train_e2e(ws, manifest, feats_dir):
    """Train the end-to-end embedding network and bilinear scorer."""
    ws.prepare()
    entries = read_manifest(manifest)
    feats = pipeline.load_feature_dir(entries, feats_dir)
    corpus = pipeline.corpus_by_speaker(entries, feats)
    e = ws.cfg["e2e"]
    cfg = E2EConfig(input_dim=ws.cfg["frontend"]["num_mel_bins"],
                    lift_dim=e["lift_dim"], nin_hidden=e["nin_hidden"],
                    nin_out=e["nin_out"], pre_pool_dim=e["pre_pool_dim"],
                    embedding_dim=e["embedding_dim"])
    n = e["pair_batch_n"]
    k = e["loss_k"] if e["loss_k"] > 0 else 1.0 / (n - 1)
    t = ws.cfg["trainer"]
    tcfg = TrainerConfig(learning_rate=e["learning_rate"], lr_decay=e["lr_decay"],
                         lr_decay_interval=e["lr_decay_interval"],
                         momentum=t["momentum"], clip_norm=t["clip_norm"],
                         max_epochs=1, seed=ws.seed)
    log_path = ws.path("e2e_train.log")
    with open(log_path, "w") as log:
        log.write("iteration\tloss\tpair_accuracy\n")
        net, scorer = train_e2e(
            corpus, cfg, E2ELossConfig(k=k), tcfg,
            n_pairs=n, iterations=e["iterations"],
            log=lambda h: log.write(f"{h['iteration']}\t{h['loss']!r}\t{h['pair_accuracy']!r}\n"))
    store.save_e2e_model(ws.path("e2e.svbf"), net, scorer)
    click.echo(f"trained e2e model -> {ws.path('e2e.svbf')}")


@main.command()
@click.option("--model", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--features", "feats_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_obj
def extract(ws, model, manifest, feats_dir, out_path):
    """Extract per-utterance d-vectors or embeddings."""
    ws.prepare()
    entries = sorted(read_manifest(manifest), key=lambda e: e.utt_id)
    feats = pipeline.load_feature_dir(entries, feats_dir)
    kind, _, _ = read_container(model)
    ids = [e.utt_id for e in entries]
    speakers = [e.speaker_id for e in entries]
    if kind == "dvector_net":
        net = store.load_network(model, kind="dvector_net")
        vecs = [pool_dvector(extract_frame_features(net, feats[u])) for u in ids]
        store.save_vectors(out_path, "dvector", ids, speakers, np.array(vecs))
    elif kind == "e2e_model":
        net, _ = store.load_e2e_model(model)
        vecs = [embed(net, feats[u]) for u in ids]
        store.save_vectors(out_path, "embedding", ids, speakers, np.array(vecs))
    else:
        _fail(f"{model}: unsupported model kind {kind!r}")
    click.echo(f"extracted {len(ids)} vectors -> {out_path}")


@main.command("fit-backend")
@click.option("--vectors", required=True, type=click.Path(exists=True))
@click.option("--kind", required=True, type=click.Choice(["lda", "plda"]))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_obj
def fit_backend(ws, vectors, kind, out_path):
    """Fit an LDA or PLDA back-end on labelled vectors."""
    ws.prepare()
    _, speakers, x = store.load_vectors(vectors)
    labels = np.array(speakers)
    if kind == "lda":
        target = min(x.shape[1], ws.cfg["backends"]["lda_dim"], len(set(speakers)) - 1)
        store.save_lda(out_path, fit_lda(x, labels, target))
    else:
        center = x.mean(axis=0)
        normalized = center_and_length_normalize(x, center)
        model = fit_plda(normalized, labels,
                         iterations=ws.cfg["backends"]["plda_iterations"])
        store.save_plda(out_path, model, center)
    click.echo(f"fitted {kind} back-end -> {out_path}")


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.pass_obj
def trials(ws, manifest):
    """Build gender-matched trial and segment files for the configured condition."""
    ws.prepare()
    entries = read_manifest(manifest)
    ev = ws.cfg["eval"]
    tl = build_conditions(entries, ev["enroll_secs"], ev["test_secs"])
    tag = tl.condition.replace("(", "").replace(")", "").replace("-", "_")
    write_trial_file(ws.path(f"trials_{tag}.tsv"), tl.trials)
    write_segments_file(ws.path(f"segments_{tag}.tsv"), tl)
    targets = sum(1 for t in tl.trials if t.label == "target")
    click.echo(f"{tl.condition}: {len(tl.trials)} trials "
               f"({targets} target / {len(tl.trials) - targets} nontarget)")


@main.command()
@click.option("--system", required=True,
              type=click.Choice(["dvector-cosine", "dvector-lda", "dvector-plda",
                                 "e2e", "random"]))
@click.option("--trials", "trials_path", required=True, type=click.Path(exists=True))
@click.option("--segments", "segments_path", required=True, type=click.Path(exists=True))
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--model", type=click.Path(exists=True), default=None)
@click.option("--backend", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.pass_obj
def score(ws, system, trials_path, segments_path, manifest, model, backend, out_path):
    """Score a trial list with one system; logits/similarities go to a score file."""
    ws.prepare()
    trial_items = read_trial_file(trials_path)
    _, enroll_segments, test_segments = read_segments_file(segments_path)
    entries = read_manifest(manifest)
    fcfg = pipeline.make_frontend_config(ws.cfg)
    if system == "e2e":
        # the e2e model is trained on un-normalized fbank (see featurize --no-cmvn)
        fcfg = dataclasses.replace(fcfg, cmvn_mode="none")
    kwargs = {"seed": ws.seed}
    enroll_frames = test_frames = {}
    if system != "random":
        enroll_frames, test_frames = pipeline.side_features(
            (enroll_segments, test_segments), entries, fcfg)
    if system.startswith("dvector"):
        if model is None:
            _fail("--model (dvector_net file) is required for d-vector systems")
        kwargs["dvector_net"] = store.load_network(model, kind="dvector_net")
        if system == "dvector-lda":
            if backend is None:
                _fail("--backend (lda file) is required")
            kwargs["lda"] = store.load_lda(backend)
        elif system == "dvector-plda":
            if backend is None:
                _fail("--backend (plda file) is required")
            kwargs["plda"], kwargs["plda_center"] = store.load_plda(backend)
    elif system == "e2e":
        if model is None:
            _fail("--model (e2e_model file) is required for the e2e system")
        kwargs["e2e_net"], kwargs["e2e_scorer"] = store.load_e2e_model(model)
    records = pipeline.score_trials(system, trial_items, enroll_frames, test_frames, **kwargs)
    write_score_file(out_path, records)
    click.echo(f"scored {len(records)} trials -> {out_path}")


@main.command("eval")
@click.argument("score_specs", nargs=-1, required=True)
@click.pass_obj
def cmd_eval(ws, score_specs):
    """Compute EERs and emit the report table.

    Each argument is LABEL=SCOREFILE where LABEL is system:scoring:condition
    (a bare path evaluates one file under a generic label).
    """
    ws.prepare()
    results = {}
    for spec in score_specs:
        if "=" in spec:
            label, path = spec.split("=", 1)
        else:
            label, path = os.path.splitext(os.path.basename(spec))[0], spec
        parts = label.split(":")
        while len(parts) < 3:
            parts.append("-")
        system, scoring, condition = parts[:3]
        records = read_score_file(path)
        if not records:
            _fail(f"{path}: no trials")
        try:
            report = compute_eer([r[2] for r in records], [r[3] for r in records])
        except SvbenchError as e:
            _fail(f"{path}: {e}")
        results.setdefault((system, scoring), {})[condition] = report
    table, tsv = emit_report(results)
    with open(ws.path("report.txt"), "w") as f:
        f.write(table)
    with open(ws.path("report.tsv"), "w") as f:
        f.write(tsv)
    click.echo(table, nl=False)


@main.command("gradcheck")
@click.option("--arch", type=click.Choice(["dvector", "e2e", "both"]), default="both")
@click.pass_obj
def cmd_gradcheck(ws, arch):
    """Finite-difference gradient verification at reduced dimensions."""
    ws.prepare()
    from .gradcheck import gradcheck_dvector, gradcheck_e2e
    reports = {}
    if arch in ("dvector", "both"):
        reports["dvector"] = gradcheck_dvector(seed=ws.seed)
    if arch in ("e2e", "both"):
        reports["e2e"] = gradcheck_e2e(seed=ws.seed)
    ok = True
    for name, per in reports.items():
        worst = max(per.values())
        status = "PASS" if worst < TOLERANCE else "FAIL"
        ok = ok and worst < TOLERANCE
        click.echo(f"{name}: max relative error {worst:.3e} [{status}]")
        for param in sorted(per):
            click.echo(f"  {param}: {per[param]:.3e}")
    if not ok:
        _fail(f"gradient check exceeded tolerance {TOLERANCE}")


def run_main():
    try:
        main(standalone_mode=True)
    except SvbenchError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    run_main()
