"""Command-line interface: ``bayesmm {synth,run,inspect,compare}``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields

from . import suite
from .episode import METHODS, EpisodeConfig, report_to_json, run_episode
from .errors import BayesMMError, ConfigurationError, FileFormatError, InvalidInputError
from .io import read_prompt_header, read_prompts, read_stream, read_stream_header, write_prompts, write_stream
from .synth import Corruption, SynthSpec, load_references, save_references, synth_generate

log = logging.getLogger("bayesmm")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


def _episode(prompts, stream, config, references=None):
    # inputs that disagree with each other are a data problem, not a usage one
    try:
        return run_episode(prompts, stream, config, references)
    except ConfigurationError as exc:
        raise InvalidInputError(str(exc)) from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# (flag, config field, type, help)
_CONFIG_FLAGS = [
    ("--alpha2", "alpha2", float, "prior variance of the geometric class means"),
    ("--beta2", "beta2", float, "prior variance of the textual prototypes (inf allowed)"),
    ("--rel-eps", "rel_eps", float, "relative ridge added to the pooled prompt covariance"),
    ("--tau", "tau", float, "minimum fused confidence for a geometric update"),
    ("--lambda", "lam", float, "cache bonus weight"),
    ("--gamma", "gamma", float, "cache cosine sharpness"),
    ("--K", "K", int, "cache capacity per class"),
    ("--insert-threshold", "insert_threshold", float, "minimum zero-shot confidence to cache a sample"),
    ("--cache-similarity", "cache_similarity", str, "cache cosine against the entry 'mean' or 'max'"),
    ("--map-form", "map_form", str, "textual MAP form: canonical | paper_main"),
    ("--init-cov-mode", "init_cov_mode", str, "geometric prior covariance: alpha_identity | textual_scatter"),
    ("--predictive-mode", "predictive_mode", str, "geometric scoring covariance: paper_literal | posterior_predictive"),
    ("--update-mode", "update_mode", str, "geometric update: hard | soft"),
    ("--fusion", "fusion", str, "full | textual_only | geometric_only"),
    ("--checkpoint-every", "checkpoint_every", int, "checkpoint cadence in samples (0 disables)"),
    ("--mmd-samples", "mmd_samples", int, "samples per side for checkpoint MMD"),
    ("--seed", "seed", int, "seed for checkpoint sampling"),
]


def _add_config_flags(p):
    g = p.add_argument_group("episode configuration (override --config)")
    g.add_argument("--config", help="JSON file with episode configuration keys")
    for flag, dest, typ, help_ in _CONFIG_FLAGS:
        g.add_argument(flag, dest=dest, type=typ, default=None, help=help_)
    g.add_argument("--diagonal", dest="diagonal", action="store_const", const=True, default=None,
                   help="store and solve diagonal covariances only")
    g.add_argument("--per-class-textual-cov", dest="per_class_textual_cov", action="store_const",
                   const=True, default=None, help="score text with each class's own scatter")


def _add_synth_flags(p):
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--prompts-per-class", dest="n_prompts", type=int, default=suite.SUITE_PROMPTS)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--corruption", default="mean_shift:0.4",
                   help="none | mean_shift:SCALE | covariance_inflate:FACTOR")
    p.add_argument("--sigma-text", type=float, default=suite.SUITE_SIGMA_TEXT)
    p.add_argument("--sigma-gen", type=float, default=suite.SUITE_SIGMA_GEN)
    p.add_argument("--min-angle", type=float, default=suite.SUITE_MIN_ANGLE)
    p.add_argument("--no-normalize", action="store_true", help="store raw (unnormalized) features")


def _synth_spec(args, seed):
    return SynthSpec(args.classes, args.dim, args.n_prompts, args.samples, Corruption.parse(args.corruption),
                     seed, args.sigma_text, args.sigma_gen, args.min_angle, not args.no_normalize)


def build_config(args, base=None):
    """Defaults < suite base < --config file < explicit flags."""
    values = dict(base or {})
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                values.update(json.load(fh))
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {args.config} is not valid JSON: {exc}") from exc
    for f in fields(EpisodeConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return EpisodeConfig.from_dict(values)


def _emit(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_synth(args):
    spec = _synth_spec(args, args.seed)
    data = synth_generate(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    base = os.path.join(args.out_dir, args.name)
    ppath, spath, rpath = base + ".bmmt", base + ".bmmf", base + ".ref.json"
    write_prompts(ppath, data.prompts.embeddings, data.prompts.class_names)
    write_stream(spath, data.stream.labels, data.stream.features, data.stream.n_classes, data.stream.flags)
    save_references(rpath, data.references)
    print(ppath)
    print(spath)
    print(rpath)
    return EXIT_OK


def cmd_run(args):
    config = build_config(args, {"method": args.method} if args.method else None)
    prompts = read_prompts(args.prompts)
    stream = read_stream(args.stream)
    refs = load_references(args.reference) if args.reference else None
    report = _episode(prompts, stream, config, refs)
    _emit(report_to_json(report), args.report)
    log.info("accuracy %s", report["summary"]["accuracy"])
    return EXIT_OK


def cmd_inspect(args):
    out = []
    for path in args.paths:
        with open(path, "rb") as fh:
            magic = fh.read(4)
        if magic == b"BMMF":
            out.append({"path": path, **read_stream_header(path)})
        elif magic == b"BMMT":
            out.append({"path": path, **read_prompt_header(path)})
        else:
            raise FileFormatError(f"{path}: unrecognised magic {magic!r}")
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _format_table(rows, title):
    zs = rows["zeroshot"]
    lines = [title, f"{'method':<10} {'accuracy':>9} {'delta':>7}"]
    for m in METHODS:
        a = rows[m]
        lines.append(f"{m:<10} {100 * a:9.2f} {100 * (a - zs):+7.2f}")
    return "\n".join(lines) + "\n"


def cmd_compare(args):
    if args.synthetic_seeds:
        spec_args = args
        base = suite.suite_config_dict()
        config = build_config(args, base)
        rows = {m: [] for m in METHODS}
        for seed in range(args.synthetic_seeds):
            data = synth_generate(_synth_spec(spec_args, seed))
            for m in METHODS:
                r = run_episode(data.prompts, data.stream, config.replace(method=m, seed=seed, checkpoint_every=0))
                rows[m].append(r["summary"]["accuracy"])
        acc = {m: sum(v) / len(v) for m, v in rows.items()}
        title = f"synthetic suite, {args.synthetic_seeds} seeds, corruption {args.corruption}"
    else:
        if not (args.stream and args.prompts):
            raise UsageError("compare needs --stream and --prompts, or --synthetic-seeds N")
        config = build_config(args)
        prompts = read_prompts(args.prompts)
        stream = read_stream(args.stream)
        with ThreadPoolExecutor(max_workers=len(METHODS)) as pool:
            futures = {m: pool.submit(_episode, prompts, stream, config.replace(method=m, checkpoint_every=0))
                       for m in METHODS}
            acc = {m: f.result()["summary"]["accuracy"] for m, f in futures.items()}
        title = f"stream {args.stream}"
        if any(a is None for a in acc.values()):
            raise InvalidInputError("stream has no labelled records; accuracy undefined")
    if args.format == "json":
        doc = {"methods": {m: {"accuracy": acc[m], "delta_vs_zeroshot": acc[m] - acc["zeroshot"]} for m in METHODS},
               "config": {k: v for k, v in vars(config).items()}}
        _emit(json.dumps(doc, indent=2) + "\n", args.output)
    else:
        _emit(_format_table(acc, title), args.output)
    return EXIT_OK


def make_parser():
    p = _Parser(prog="bayesmm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic prompt file, stream and reference sidecar")
    _add_synth_flags(s)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", default=".")
    s.add_argument("--name", default="synth", help="basename of the written files")
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("run", help="run one episode and write its report")
    r.add_argument("--method", choices=METHODS, default=None)
    r.add_argument("--stream", required=True)
    r.add_argument("--prompts", required=True)
    r.add_argument("--reference", help="reference sidecar from `synth` (enables KL/MMD checkpoints)")
    r.add_argument("--report", default="-", help="output path, '-' for standard output")
    _add_config_flags(r)
    r.set_defaults(func=cmd_run)

    i = sub.add_parser("inspect", help="dump file headers")
    i.add_argument("paths", nargs="+")
    i.set_defaults(func=cmd_inspect)

    c = sub.add_parser("compare", help="zeroshot vs cache vs bayesmm accuracy table")
    c.add_argument("--stream")
    c.add_argument("--prompts")
    c.add_argument("--synthetic-seeds", type=int, default=0,
                   help="instead of files, average over this many synthetic suite seeds")
    _add_synth_flags(c)
    c.add_argument("--format", choices=("text", "json"), default="text")
    c.add_argument("--output", default="-")
    _add_config_flags(c)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not getattr(args, "func", None):
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bayesmm: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"bayesmm: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"bayesmm: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (BayesMMError, OSError) as exc:
        print(f"bayesmm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
