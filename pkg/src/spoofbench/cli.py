"""Command-line entry point: ``spoofbench <subcommand> ...``.

Artifacts go under ``<runs>/<name>/{config,checkpoints,scores,enhanced,report}``
next to a ``manifest.json`` holding the config snapshot, package versions,
seed and one entry per executed subcommand.

Typical toy pipeline::

    spoofbench make-toy-data data/toy
    spoofbench split-data data/toy/protocol.txt data/toy/split
    spoofbench --profile toy train-spkemb data/toy/split/attacker.txt data/toy/wav
    spoofbench --profile toy train-enhance data/toy/split/attacker.txt data/toy/wav
    spoofbench --profile toy train-antispoof data/toy/split/defender.txt data/toy/wav
    spoofbench --profile toy enhance data/toy/eval.txt data/toy/wav
    spoofbench --profile toy score data/toy/eval.txt data/toy/wav --enhanced
    spoofbench eval-eer runs/default/scores/enhanced.txt data/toy/eval.txt
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .antispoof import (AntispoofConfig, bonafide_scores, build_antispoof, load_antispoof,
                        save_antispoof, train_antispoof)
from .audio import AlignPolicy, Waveform, align_length, align_samples, read_audio
from .config import RunConfig
from .enhancer import (EnhancerConfig, SpoofPair, batch_enhance, build_enhancer, enhance,
                       load_enhancer, read_manifest, save_enhancer, train_enhancer)
from .errors import SpoofbenchError
from .frontend import FrontendConfig, build_tiny_frontend, load_external_frontend
from .metrics import (ScoringRun, compute_eer, emit_report, join_scores, read_scores,
                      write_scores)
from .protocol import SplitPlan, make_split, pair_for_enhancement, parse_protocol, write_split
from .speaker import (AAMConfig, LrSchedule, build_extractor, freeze, load_extractor,
                      save_extractor, train_extractor)

log = logging.getLogger("spoofbench")

RUN_SUBDIRS = ("config", "checkpoints", "scores", "enhanced", "report")
AUDIO_SUFFIXES = (".flac", ".wav")


class RunDir:
    def __init__(self, root, name, cfg: RunConfig):
        self.path = Path(root) / name
        self.cfg = cfg
        for sub in RUN_SUBDIRS:
            (self.path / sub).mkdir(parents=True, exist_ok=True)

    def __truediv__(self, other):
        return self.path / other

    def record(self, command: str, argv, outputs) -> None:
        (self.path / "config" / "config.txt").write_text(self.cfg.to_text(), encoding="utf-8")
        manifest_path = self.path / "manifest.json"
        manifest = {"commands": []}
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        manifest.update({
            "seed": self.cfg.seed,
            "profile": self.cfg.profile,
            "config": self.cfg.data,
            "versions": _versions(),
        })
        manifest["commands"].append({
            "command": command, "argv": list(argv),
            "outputs": [str(p) for p in outputs],
            "time": time.strftime("%Y-%m-%dT%H:%M:%S"),
        })
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True),
                                 encoding="utf-8")


def _versions() -> dict:
    return {"spoofbench": __version__, "python": platform.python_version(),
            "torch": torch.__version__, "numpy": np.__version__}


def _seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed)


def resolve_audio(audio_dir, utt_id: str) -> Path:
    base = Path(audio_dir)
    for folder in (base, base / "flac", base / "wav"):
        for suffix in AUDIO_SUFFIXES:
            path = folder / f"{utt_id}{suffix}"
            if path.exists():
                return path
    raise FileNotFoundError(f"no audio for {utt_id} under {base}")


def _load_audio(records, audio_dir):
    return {r.utt_id: read_audio(resolve_audio(audio_dir, r.utt_id)) for r in records}


def _frontend(cfg: RunConfig, seed: int):
    fc = cfg["frontend"]
    if fc["adapter"] == "tiny" and not fc["checkpoint"]:
        return build_tiny_frontend(FrontendConfig(
            embed_dim=fc["embed_dim"], hop=fc["hop"], window=fc["window"],
            hidden_layers=fc["hidden_layers"]), seed)
    return load_external_frontend(fc["adapter"], fc["checkpoint"])


def _train_policy(cfg):
    return AlignPolicy(cfg["audio"]["target_length"], "random_crop", cfg.seed)


def _eval_policy(cfg):
    return AlignPolicy(cfg["audio"]["target_length"], cfg["audio"]["eval_mode"], cfg.seed)


def _checkpoint(run, explicit, default_name):
    return Path(explicit) if explicit else run / "checkpoints" / default_name


def _write_report(run, name, report) -> Path:
    path = run / "report" / f"{name}.json"
    path.write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    return path


# subcommands ---------------------------------------------------------------

def cmd_split_data(args, cfg, run):
    sc = cfg["split"]
    plan = SplitPlan(scenario=args.scenario or sc["scenario"],
                     attacker_systems=tuple(sc["attacker_systems"].split(",")),
                     defender_systems=tuple(sc["defender_systems"].split(",")),
                     seed=cfg.seed)
    attacker, defender = make_split(parse_protocol(args.protocol), plan)
    summary = write_split(attacker, defender, args.out_dir, plan)
    out = Path(args.out_dir)
    print(f"attacker: {summary['attacker']['total']} trials -> {out / 'attacker.txt'}")
    print(f"defender: {summary['defender']['total']} trials -> {out / 'defender.txt'}")
    return [out / "attacker.txt", out / "defender.txt", out / "summary.json"]


def cmd_train_spkemb(args, cfg, run):
    sc = cfg["spkembed"]
    records = [r for r in parse_protocol(args.protocol) if r.key == "bonafide"]
    audio = _load_audio(records, args.audio_dir)
    extractor = build_extractor(_frontend(cfg, cfg.seed))
    report = train_extractor(
        extractor, [audio[r.utt_id] for r in records], [r.speaker_id for r in records],
        LrSchedule(sc["total_iters"], peak=sc["peak_lr"], warmup_frac=sc["warmup_frac"],
                   constant_frac=sc["constant_frac"], decay_frac=sc["decay_frac"]),
        AAMConfig(sc["margin"], sc["scale"]), batch=sc["batch"],
        policy=_train_policy(cfg), seed=cfg.seed)
    freeze(extractor)
    ckpt = _checkpoint(run, args.output, "speaker.pt")
    save_extractor(extractor, ckpt)
    print(f"final loss {report.iteration_losses[-1]:.4f}; saved {ckpt}")
    return [ckpt, _write_report(run, "train-spkemb", report)]


def _enhancer_config(cfg) -> EnhancerConfig:
    ec = dict(cfg["enhancer"])
    ec.pop("resample_pairs")
    return EnhancerConfig(**ec, seed=cfg.seed)


def cmd_train_enhance(args, cfg, run):
    records = parse_protocol(args.protocol)
    fixed = AlignPolicy(cfg["audio"]["target_length"], "fixed_start")
    audio = {k: align_length(w, fixed)
             for k, w in _load_audio(records, args.audio_dir).items()}
    extractor = freeze(load_extractor(_checkpoint(run, args.extractor, "speaker.pt")))
    pairs = [SpoofPair(audio[p.spoof.utt_id], audio[p.bonafide.utt_id], p.target_speaker)
             for p in pair_for_enhancement(records, cfg.seed)]
    pool = None
    if cfg["enhancer"]["resample_pairs"]:
        pool = {}
        for r in records:
            if r.key == "bonafide":
                pool.setdefault(r.speaker_id, []).append(audio[r.utt_id])
    econf = _enhancer_config(cfg)
    model = build_enhancer(econf)
    report = train_enhancer(model, pairs, extractor, econf, bonafide_pool=pool,
                            policy=fixed)
    ckpt = _checkpoint(run, args.output, "enhancer.pt")
    save_enhancer(model, ckpt)
    print(f"final loss {report.epoch_losses[-1]:.4f}; saved {ckpt}")
    return [ckpt, _write_report(run, "train-enhance", report)]


def cmd_train_antispoof(args, cfg, run):
    ac = cfg["antispoof"]
    records = parse_protocol(args.protocol)
    audio = _load_audio(records, args.audio_dir)
    aconf = AntispoofConfig(**ac, seed=cfg.seed)
    model = build_antispoof(_frontend(cfg, cfg.seed + 1000), aconf)
    dev = None
    if args.dev_protocol:
        dev_records = parse_protocol(args.dev_protocol)
        dev_audio = _load_audio(dev_records, args.dev_audio_dir or args.audio_dir)
        dev = ([dev_audio[r.utt_id] for r in dev_records],
               [int(r.key == "bonafide") for r in dev_records])
    report = train_antispoof(model, [audio[r.utt_id] for r in records],
                             [int(r.key == "bonafide") for r in records], aconf,
                             _train_policy(cfg), dev=dev)
    ckpt = _checkpoint(run, args.output, "antispoof.pt")
    save_antispoof(model, ckpt)
    print(f"final loss {report.epoch_losses[-1]:.4f}; saved {ckpt}")
    return [ckpt, _write_report(run, "train-antispoof", report)]


def cmd_enhance(args, cfg, run):
    records = parse_protocol(args.protocol)
    model = load_enhancer(_checkpoint(run, args.enhancer, "enhancer.pt"))
    paths = {r.utt_id: resolve_audio(args.audio_dir, r.utt_id) for r in records}
    out_dir = Path(args.out_dir) if args.out_dir else run / "enhanced"
    manifest, failures = batch_enhance(records, paths, model, out_dir, _eval_policy(cfg))
    n_enh = sum(kind == "enhanced" for _, _, kind in manifest)
    print(f"enhanced {n_enh}, passed through {len(manifest) - n_enh}, "
          f"failed {len(failures)} -> {out_dir}")
    if failures:
        for utt, msg in failures:
            print(f"  {utt}: {msg}", file=sys.stderr)
        raise SpoofbenchError(f"{len(failures)} file(s) failed to enhance")
    return [out_dir / "manifest.tsv"]


def cmd_score(args, cfg, run):
    records = parse_protocol(args.protocol)
    model = load_antispoof(_checkpoint(run, args.model, "antispoof.pt"))
    source = "file"
    if args.in_memory:
        # enhance spoofs in float and score them without writing 16-bit files
        enhancer = load_enhancer(_checkpoint(run, args.enhancer, "enhancer.pt"))
        policy = _eval_policy(cfg)
        utts, wavs = [], []
        for r in records:
            wav = read_audio(resolve_audio(args.audio_dir, r.utt_id))
            if r.key == "spoof":
                wav = enhance(Waveform(align_samples(wav.samples, policy)), enhancer)
            utts.append(r.utt_id)
            wavs.append(wav)
        name = args.name or "enhanced-memory"
        source = "in-memory"
    else:
        if args.enhanced or args.enhanced_dir:
            enh_dir = Path(args.enhanced_dir) if args.enhanced_dir else run / "enhanced"
            rows = {utt: enh_dir / rel
                    for utt, rel, _ in read_manifest(enh_dir / "manifest.tsv")}
            paths = {r.utt_id: rows[r.utt_id] for r in records if r.utt_id in rows}
            name = args.name or "enhanced"
        else:
            paths = {r.utt_id: resolve_audio(args.audio_dir, r.utt_id) for r in records}
            name = args.name or "original"
        utts = list(paths)
        wavs = [read_audio(paths[u]) for u in utts]
    scores = bonafide_scores(wavs, model, _eval_policy(cfg))
    out = Path(args.output) if args.output else run / "scores" / f"{name}.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scores(dict(zip(utts, scores)), out)
    info = out.with_suffix(".json")
    info.write_text(json.dumps({"scores": out.name, "audio": source,
                                "trials": len(utts)}, indent=2), encoding="utf-8")
    print(f"scored {len(utts)} utterances ({source} audio) -> {out}")
    return [out, info]


def cmd_eval_eer(args, cfg):
    scores = join_scores(read_scores(args.scores), parse_protocol(args.protocol))
    eer, threshold = compute_eer(scores)
    print(f"EER: {eer * 100:.2f}%")
    print(f"threshold: {threshold:.6g}")
    return []


def cmd_report(args, cfg, run):
    records = parse_protocol(args.protocol)
    runs = []
    for spec in args.runs:
        label, sep, path = spec.partition("=")
        model, slash, condition = label.partition("/")
        if not sep or not slash:
            raise SpoofbenchError(f"expected MODEL/CONDITION=SCORES, got {spec!r}")
        scores = None
        if Path(path).exists():
            scores = join_scores(read_scores(path), records)
        else:
            log.warning("score file %s not found; cell left empty", path)
        runs.append(ScoringRun(model, condition, scores))
    pairs = {}
    for spec in args.spectrogram or ():
        before, sep, after = spec.partition(":")
        if not sep:
            raise SpoofbenchError(f"expected ORIGINAL:ENHANCED, got {spec!r}")
        pairs[Path(before).stem] = (read_audio(before), read_audio(after))
    out_dir = Path(args.out_dir) if args.out_dir else run / "report"
    result = emit_report(runs, out_dir, pairs, {"seed": cfg.seed, "profile": cfg.profile},
                         bins=cfg["eval"]["cdf_bins"])
    for model, row in result["table"].items():
        print(model + "\t" + "\t".join(f"{c}={v}" for c, v in row.items()))
    return [out_dir / "results.csv", out_dir / "results.json"]


def cmd_make_toy_data(args, cfg, run):
    from .synth import make_corpus, write_corpus

    length = cfg["audio"]["target_length"] if args.length is None else args.length
    records, audio = make_corpus(args.speakers, args.bonafide, args.spoofs,
                                 length=length, seed=cfg.seed)
    proto, wav_dir = write_corpus(records, audio, args.out_dir)
    eval_records, eval_audio = make_corpus(args.speakers, max(args.bonafide // 4, 1),
                                           max(args.spoofs // 2, 1), length=length,
                                           seed=cfg.seed, prefix="LA_E")
    eval_proto, _ = write_corpus(eval_records, eval_audio, args.out_dir, "eval.txt")
    print(f"{len(records)} training and {len(eval_records)} eval utterances -> {wav_dir}")
    return [proto, eval_proto]


# parser --------------------------------------------------------------------

def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommands repeat the global flags without defaults so a flag given
    # before the subcommand is not reset by the subparser
    def d(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", choices=("toy", "reference"), default=d(None),
                        help="hyperparameter defaults (default: reference)")
    common.add_argument("--config", default=d(None), help="section.key = value file")
    common.add_argument("--set", action="append", default=d([]), metavar="KEY=VALUE",
                        help="override one config key, repeatable")
    common.add_argument("--seed", type=int, default=d(None))
    common.add_argument("--runs", dest="runs_root", default=d("runs"))
    common.add_argument("--run", dest="run_name", default=d("default"))
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spoofbench", parents=[_common(False)],
                                description="Spoofing-enhancement attack and defense toolkit.")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[_common(True)])

    s = add("split-data", "split a protocol into attacker and defender sets")
    s.add_argument("--scenario", choices=("disjoint", "shared_defender_full"), default=None)
    s.add_argument("protocol")
    s.add_argument("out_dir")

    s = add("train-spkemb", "fine-tune the speaker extractor on bona fide speech")
    s.add_argument("protocol")
    s.add_argument("audio_dir")
    s.add_argument("-o", "--output", default=None)

    s = add("train-enhance", "train the spoofing enhancer against a frozen extractor")
    s.add_argument("protocol")
    s.add_argument("audio_dir")
    s.add_argument("--extractor", default=None)
    s.add_argument("-o", "--output", default=None)

    s = add("train-antispoof", "train the anti-spoofing classifier")
    s.add_argument("protocol")
    s.add_argument("audio_dir")
    s.add_argument("--dev-protocol", default=None)
    s.add_argument("--dev-audio-dir", default=None)
    s.add_argument("-o", "--output", default=None)

    s = add("enhance", "enhance every spoofed trial of a protocol")
    s.add_argument("protocol")
    s.add_argument("audio_dir")
    s.add_argument("--enhancer", default=None)
    s.add_argument("--out-dir", default=None)

    s = add("score", "write bona fide scores for a protocol")
    s.add_argument("protocol")
    s.add_argument("audio_dir")
    s.add_argument("--model", default=None)
    s.add_argument("--enhanced", action="store_true", default=False,
                   help="score the run's enhanced audio instead of the originals")
    s.add_argument("--enhanced-dir", default=None)
    s.add_argument("--in-memory", action="store_true", default=False,
                   help="enhance spoofs on the fly and score the float output")
    s.add_argument("--enhancer", default=None,
                   help="enhancer checkpoint for --in-memory")
    s.add_argument("--name", default=None)
    s.add_argument("-o", "--output", default=None)

    s = add("eval-eer", "print the EER of a score file")
    s.add_argument("scores")
    s.add_argument("protocol")

    s = add("report", "results table, CDF plots and spectrograms")
    s.add_argument("protocol")
    s.add_argument("runs", nargs="+", metavar="MODEL/CONDITION=SCORES")
    s.add_argument("--spectrogram", action="append", metavar="ORIGINAL:ENHANCED")
    s.add_argument("--out-dir", default=None)

    s = add("make-toy-data", "write a synthetic corpus with protocol files")
    s.add_argument("out_dir")
    s.add_argument("--speakers", type=int, default=8)
    s.add_argument("--bonafide", type=int, default=40)
    s.add_argument("--spoofs", type=int, default=6)
    s.add_argument("--length", type=int, default=None)
    return p


COMMANDS = {
    "split-data": (cmd_split_data, True),
    "train-spkemb": (cmd_train_spkemb, True),
    "train-enhance": (cmd_train_enhance, True),
    "train-antispoof": (cmd_train_antispoof, True),
    "enhance": (cmd_enhance, True),
    "score": (cmd_score, True),
    "eval-eer": (cmd_eval_eer, False),
    "report": (cmd_report, True),
    "make-toy-data": (cmd_make_toy_data, True),
}


def cli_main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.profile, args.config, args.set, seed=args.seed)
        _seed_everything(cfg.seed)
        func, uses_run = COMMANDS[args.command]
        if uses_run:
            run = RunDir(args.runs_root, args.run_name, cfg)
            outputs = func(args, cfg, run)
            run.record(args.command, argv, outputs)
        else:
            func(args, cfg)
    except (SpoofbenchError, ValueError, ArithmeticError, RuntimeError, OSError,
            KeyError) as exc:
        print(f"spoofbench {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
