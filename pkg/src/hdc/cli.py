"""Command-line interface.

Subcommands: synth, train, eval, embed, gradcheck, histogram.  Settings
come from an INI config file (sections [cascade], [train], [sampler],
[synth], [data], [output]) with flags overriding file values; the fully
resolved configuration is echoed into the output directory.

Exit codes: 0 success, 1 config/usage, 2 I/O, 3 training abort,
4 gradient check failure.
"""

import argparse
import configparser
import sys
from pathlib import Path

from . import checkpoint as ckpt
from . import data as data_mod
from . import evaluate as eval_mod
from .errors import ConfigError, HdcError, TrainingAbort
from .gradcheck import cascade_gradcheck
from .model import CascadeConfig, init_model
from .training import TrainConfig, train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_TRAINING = 3
EXIT_GRADCHECK = 4

GRADCHECK_TOLERANCE = 1e-4

DEFAULTS = {
    "cascade": {
        "levels": "3",
        "input_dim": "",  # empty: infer from the dataset
        "block_layers": "64 | 64 | 64",
        "embed_dims": "16, 16, 16",
        "level_weights": "1, 1, 1",
        "hard_fractions": "100, 50, 20",
        "margin": "1.0",
        "seed": "0",
    },
    "train": {
        "iterations": "2000",
        "lr_initial": "0.01",
        "lr_decay_every": "800",
        "lr_decay_factor": "0.1",
        "momentum": "0.9",
        "mode": "hdc",
        "checkpoint_every": "0",
        "seed": "0",
        "workers": "1",
        "rank_by": "current",
    },
    "sampler": {"classes_per_batch": "10", "images_per_class": "10", "seed": "0"},
    "synth": {
        "num_classes": "10",
        "per_class": "50",
        "dim": "32",
        "centroid_scale": "1.0",
        "noise_sigma": "0.4",
        "hard_fraction_mix": "0.15",
        "seed": "0",
    },
    "data": {"source": ""},
    "output": {"dir": "hdc_out"},
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        raise UsageError(message)


def _parse_int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _parse_float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_block_layers(text):
    return tuple(tuple(int(w) for w in lvl.split(",")) for lvl in text.split("|"))


def load_settings(config_path=None):
    """DEFAULTS merged with the INI file at config_path (if any)."""
    settings = {section: dict(values) for section, values in DEFAULTS.items()}
    if config_path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(config_path)
        if not read:
            raise OSError(f"config file not found: {config_path}")
        for section in parser.sections():
            if section not in settings:
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                if key not in settings[section]:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                settings[section][key] = value
    return settings


def apply_overrides(settings, args):
    if getattr(args, "seed", None) is not None:
        for section in ("cascade", "train", "sampler", "synth"):
            settings[section]["seed"] = str(args.seed)
    if getattr(args, "mode", None):
        settings["train"]["mode"] = args.mode
    if getattr(args, "rank_by", None):
        settings["train"]["rank_by"] = args.rank_by
    if getattr(args, "workers", None):
        settings["train"]["workers"] = str(args.workers)
    if getattr(args, "iterations", None):
        settings["train"]["iterations"] = str(args.iterations)
    if getattr(args, "output_dir", None):
        settings["output"]["dir"] = args.output_dir
    return settings


def build_cascade_config(settings, input_dim=None) -> CascadeConfig:
    sec = settings["cascade"]
    configured = sec["input_dim"].strip()
    if input_dim is None:
        if not configured:
            raise ConfigError("cascade input_dim is not set and no dataset to infer it from")
        input_dim = int(configured)
    elif configured and int(configured) != input_dim:
        raise ConfigError(
            f"cascade input_dim {configured} does not match dataset dim {input_dim}"
        )
    return CascadeConfig(
        levels=int(sec["levels"]),
        input_dim=int(input_dim),
        block_layers=_parse_block_layers(sec["block_layers"]),
        embed_dims=_parse_int_list(sec["embed_dims"]),
        level_weights=_parse_float_list(sec["level_weights"]),
        hard_fractions=_parse_float_list(sec["hard_fractions"]),
        margin=float(sec["margin"]),
        seed=int(sec["seed"]),
    )


def build_train_config(settings) -> TrainConfig:
    sec = settings["train"]
    return TrainConfig(
        iterations=int(sec["iterations"]),
        lr_initial=float(sec["lr_initial"]),
        lr_decay_every=int(sec["lr_decay_every"]),
        lr_decay_factor=float(sec["lr_decay_factor"]),
        momentum=float(sec["momentum"]),
        mode=sec["mode"],
        checkpoint_every=int(sec["checkpoint_every"]),
        seed=int(sec["seed"]),
        workers=int(sec["workers"]),
        rank_by=sec["rank_by"],
    )


def build_sampler_config(settings) -> data_mod.SamplerConfig:
    sec = settings["sampler"]
    return data_mod.SamplerConfig(
        classes_per_batch=int(sec["classes_per_batch"]),
        images_per_class=int(sec["images_per_class"]),
        seed=int(sec["seed"]),
    )


def build_synth_config(settings) -> data_mod.SynthConfig:
    sec = settings["synth"]
    return data_mod.SynthConfig(
        num_classes=int(sec["num_classes"]),
        per_class=int(sec["per_class"]),
        dim=int(sec["dim"]),
        centroid_scale=float(sec["centroid_scale"]),
        noise_sigma=float(sec["noise_sigma"]),
        hard_fraction_mix=float(sec["hard_fraction_mix"]),
        seed=int(sec["seed"]),
    )


def load_dataset(settings, data_path=None) -> data_mod.Dataset:
    source = data_path or settings["data"]["source"].strip()
    if source:
        return data_mod.load_csv(source)
    return data_mod.synth_clusters(build_synth_config(settings))


def prepare_output_dir(settings) -> Path:
    out = Path(settings["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_resolved_config(settings, path) -> None:
    parser = configparser.ConfigParser()
    for section, values in settings.items():
        parser[section] = values
    with open(path, "w") as fh:
        parser.write(fh)


def cmd_synth(args) -> int:
    settings = apply_overrides(load_settings(args.config), args)
    out_dir = prepare_output_dir(settings)
    dataset = data_mod.synth_clusters(build_synth_config(settings))
    out_path = Path(args.out) if args.out else out_dir / "dataset.csv"
    data_mod.save_csv(dataset, out_path)
    write_resolved_config(settings, out_dir / "config_used.ini")
    print(f"wrote {len(dataset)} rows ({dataset.num_classes} classes, dim {dataset.dim}) to {out_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    settings = apply_overrides(load_settings(args.config), args)
    out_dir = prepare_output_dir(settings)
    dataset = load_dataset(settings, args.data)
    cascade_cfg = build_cascade_config(settings, input_dim=dataset.dim)
    train_cfg = build_train_config(settings)
    sampler_cfg = build_sampler_config(settings)
    write_resolved_config(settings, out_dir / "config_used.ini")

    model = init_model(cascade_cfg)
    model, log = train(
        model,
        dataset,
        train_cfg,
        sampler_cfg,
        log_path=out_dir / "train_log.csv",
        checkpoint_dir=out_dir,
    )
    last = log.records[-1]
    print(
        f"trained {train_cfg.iterations} iterations in mode {train_cfg.mode}; "
        f"final loss {last.total_loss:.6f}; checkpoint at {out_dir / 'final.ckpt'}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    settings = apply_overrides(load_settings(args.config), args)
    out_dir = prepare_output_dir(settings)
    model = ckpt.load_checkpoint(args.checkpoint)
    dataset = load_dataset(settings, args.data)
    ks = _parse_int_list(args.recall_at)
    report = eval_mod.evaluate_model(
        model, dataset.features, dataset.labels, ks=ks, level=args.level
    )
    text = eval_mod.report_text(report)
    suffix = f"_level{args.level}" if args.level else ""
    (out_dir / f"eval{suffix}.txt").write_text(text)
    eval_mod.write_report_csv(
        report, out_dir / f"recall{suffix}.csv", out_dir / f"histogram{suffix}.csv"
    )
    print(text, end="")
    return EXIT_OK


def cmd_embed(args) -> int:
    settings = apply_overrides(load_settings(args.config), args)
    out_dir = prepare_output_dir(settings)
    model = ckpt.load_checkpoint(args.checkpoint)
    dataset = load_dataset(settings, args.data)
    desc = eval_mod.model_descriptors(model, dataset.features, level=args.level)
    out_path = Path(args.out) if args.out else out_dir / "descriptors.csv"
    data_mod.save_csv(data_mod.Dataset(desc, dataset.labels), out_path)
    print(f"wrote {desc.shape[0]}x{desc.shape[1]} descriptors to {out_path}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    settings = apply_overrides(load_settings(args.config), args)
    seed = int(settings["cascade"]["seed"])
    levels = args.levels or int(settings["cascade"]["levels"])
    config = CascadeConfig(
        levels=levels,
        input_dim=5,
        block_layers=tuple((6,) for _ in range(levels)),
        embed_dims=tuple(4 for _ in range(levels)),
        level_weights=tuple(1.0 for _ in range(levels)),
        hard_fractions=tuple([100.0, 50.0, 20.0][k % 3] for k in range(levels)),
        margin=float(settings["cascade"]["margin"]),
        seed=seed,
    )
    report = cascade_gradcheck(config, seed=seed)
    print(
        f"gradcheck: levels={levels} max_rel_error={report.max_relative_error:.3e} "
        f"worst_entry={report.worst_parameter_index} "
        f"analytic={report.analytic_value:.6e} numeric={report.numeric_value:.6e}"
    )
    if report.max_relative_error < GRADCHECK_TOLERANCE:
        print("gradcheck: PASS")
        return EXIT_OK
    print(f"gradcheck: FAIL (tolerance {GRADCHECK_TOLERANCE})", file=sys.stderr)
    return EXIT_GRADCHECK


def cmd_histogram(args) -> int:
    settings = apply_overrides(load_settings(args.config), args)
    out_dir = prepare_output_dir(settings)
    model = ckpt.load_checkpoint(args.checkpoint)
    dataset = load_dataset(settings, args.data)
    desc = eval_mod.model_descriptors(model, dataset.features, level=args.level)
    levels = model.config.levels if args.level is None else 1
    stats = eval_mod.distance_histograms(
        desc, dataset.labels, bin_count=args.bins,
        bin_range=eval_mod.descriptor_bin_range(levels),
    )
    suffix = f"_level{args.level}" if args.level else ""
    lda = eval_mod.lda_score(stats)
    overlap = eval_mod.histogram_overlap(stats)
    eval_mod.write_histogram_csv(stats, out_dir / f"histogram{suffix}.csv")
    with open(out_dir / f"histogram_stats{suffix}.csv", "w") as fh:
        fh.write("metric,value\n")
        for name, value in (("m_pos", stats.m_pos), ("v_pos", stats.v_pos),
                            ("m_neg", stats.m_neg), ("v_neg", stats.v_neg),
                            ("lda", lda), ("overlap", overlap)):
            fh.write(f"{name},{value!r}\n")
    print(
        f"m+={stats.m_pos:.4f} v+={stats.v_pos:.4f} m-={stats.m_neg:.4f} "
        f"v-={stats.v_neg:.4f} lda={lda:.4f} overlap={overlap:.4f}"
    )
    return EXIT_OK


def build_parser() -> Parser:
    parser = Parser(prog="hdc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, model=False):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="override every section's seed")
        p.add_argument("--output-dir", help="directory for all outputs")
        if data:
            p.add_argument("--data", help="dataset CSV (defaults to the [data]/[synth] config)")
        if model:
            p.add_argument("--checkpoint", required=True, help="model checkpoint file")
            p.add_argument("--level", type=int, help="evaluate one cascade level (1-based)")

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    common(p)
    p.add_argument("--out", help="output CSV path (default <output-dir>/dataset.csv)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    common(p, data=True)
    p.add_argument("--mode", choices=("hdc", "hard_single", "plain_contrastive"))
    p.add_argument("--rank-by", choices=("current", "previous"), dest="rank_by")
    p.add_argument("--workers", type=int)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="retrieval metrics for a checkpoint")
    common(p, data=True, model=True)
    p.add_argument("--recall-at", default="1,2,4,8", dest="recall_at",
                   help="comma-separated K values")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="write descriptors to CSV")
    common(p, data=True, model=True)
    p.add_argument("--out", help="output CSV path (default <output-dir>/descriptors.csv)")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("gradcheck", help="finite-difference check of the backward pass")
    common(p)
    p.add_argument("--levels", type=int, help="cascade depth of the probe model")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("histogram", help="pair-distance histograms for a checkpoint")
    common(p, data=True, model=True)
    p.add_argument("--bins", type=int, default=100)
    p.set_defaults(func=cmd_histogram)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except TrainingAbort as exc:
        print(f"training aborted: {exc} (iteration {exc.iteration})", file=sys.stderr)
        return EXIT_TRAINING
    except HdcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
