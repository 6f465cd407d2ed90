"""``uniwalk`` command line: train, eval, recommend, explain.

Configuration is merged as defaults < config file (``key=value`` lines)
< ``UNIWALK_*`` environment variables < command-line flags. Every command
writes a JSON run manifest next to its main output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import re
import sys
import time
from dataclasses import asdict, dataclass, field, fields

from . import __version__, _backend
from .baselines import MFHyperparams
from .errors import DivergenceError, ModelFormatError, ParseError, UnknownEntityError
from .evaluation import METHODS, MethodConfig, results_table, results_tsv, run_cv
from .ingest import Dataset, kfold_split
from .persistence import load_model, save_model
from .recommender import Recommender
from .trainer import Hyperparams, fit

log = logging.getLogger("uniwalk")

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_IO = 3
EXIT_PARSE = 4
EXIT_DIVERGENCE = 5
EXIT_LOOKUP = 6
EXIT_MODEL = 7

COMMANDS = ("train", "eval", "recommend", "explain")


class ConfigError(ValueError):
    """Bad configuration value; reported as an argument error."""


@dataclass
class RunConfig:
    """Fully resolved settings for one command."""

    hp: Hyperparams = field(default_factory=Hyperparams)
    ratings: str | None = None
    trust: str | None = None
    model: str | None = None
    output: str | None = None
    trace: str | None = None
    manifest: str | None = None
    delimiter: str | None = None
    mode: str = "reference"
    threads: int = 0
    methods: str = "uniwalk,mf,ucf,icf"
    folds: int = 5
    knn_k: int = 50
    mf_dim: int = 25
    mf_lambda: float = 0.1
    mf_eta: float = 0.01
    mf_epochs: int = 50
    top_n: int = 10
    k_expl: int = 5
    target_user: str | None = None

    def flat(self) -> dict:
        out = asdict(self.hp)
        out.update({k: v for k, v in asdict(self).items() if k != "hp"})
        return out

    def method_list(self) -> list[str]:
        return [m.strip() for m in self.methods.split(",") if m.strip()]

    def n_threads(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


_HP_FIELDS = {f.name: f.default for f in fields(Hyperparams)}
_RUN_FIELDS = {f.name: f.default for f in fields(RunConfig) if f.name != "hp"}
_OPTIONAL_STR = {"ratings", "trust", "model", "output", "trace", "manifest", "delimiter", "target_user"}
# short names used in the literature for a few hyperparameters
_ALIASES = {"l": "walk_length", "s": "window", "d": "dim", "walkspernode": "walks_per_node",
            "gradclip": "grad_clip", "clamppredictions": "clamp_predictions", "cooc": "cooc_scope",
            "topn": "top_n", "kexpl": "k_expl", "targetuser": "target_user"}


def normalize_key(key: str) -> str:
    """``walkLength``, ``walk-length`` and ``WALK_LENGTH`` all map to ``walk_length``."""
    k = re.sub(r"(?<=[a-z0-9])([A-Z])", r"_\1", key.strip()).lower().replace("-", "_")
    return _ALIASES.get(k.replace("_", ""), _ALIASES.get(k, k))


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def coerce(key: str, value):
    """Convert a raw string to the type of ``key``'s default."""
    if not isinstance(value, str):
        return value
    if key in _OPTIONAL_STR:
        return value if value != "" else None
    default = _HP_FIELDS[key] if key in _HP_FIELDS else _RUN_FIELDS[key]
    try:
        if isinstance(default, bool):
            return _parse_bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def known_key(key: str) -> bool:
    return key in _HP_FIELDS or key in _RUN_FIELDS


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            key = normalize_key(k)
            if not known_key(key):
                raise ConfigError(f"{path}:{lineno}: unknown setting {k.strip()!r}")
            out[key] = v.strip()
    return out


def read_env(environ=None) -> dict:
    """``UNIWALK_<KEY>`` variables naming a known setting; others are ignored."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith("UNIWALK_"):
            key = normalize_key(name[len("UNIWALK_"):])
            if known_key(key):
                out[key] = value
    return out


def resolve_config(flags: dict, config_path=None, environ=None) -> RunConfig:
    """Merge defaults < config file < environment < flags (``None`` flags are unset)."""
    merged: dict = {}
    if config_path:
        merged.update(read_config_file(config_path))
    merged.update(read_env(environ))
    merged.update({k: v for k, v in flags.items() if v is not None})
    values = {k: coerce(k, v) for k, v in merged.items()}
    hp_vals = {k: v for k, v in values.items() if k in _HP_FIELDS}
    run_vals = {k: v for k, v in values.items() if k in _RUN_FIELDS}
    try:
        cfg = RunConfig(hp=Hyperparams(**hp_vals), **run_vals)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.mode not in ("reference", "performance"):
        raise ConfigError(f"mode must be 'reference' or 'performance', got {cfg.mode!r}")
    if cfg.mode == "performance":
        raise ConfigError("performance mode is not implemented; use --mode reference")
    if cfg.delimiter is not None:
        cfg.delimiter = {"tab": "\t", "\\t": "\t", "space": None, "whitespace": None}.get(
            cfg.delimiter, cfg.delimiter)
        if cfg.delimiter is not None and len(cfg.delimiter) != 1:
            raise ConfigError("delimiter must be a single character, 'tab' or 'whitespace'")
    for name in ("folds", "knn_k", "top_n", "k_expl", "mf_epochs", "mf_dim"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be >= 1")
    if cfg.folds < 2:
        raise ConfigError("folds must be >= 2")
    if cfg.threads < 0:
        raise ConfigError("threads must be >= 0")
    return cfg


# ------------------------------------------------------------------- parser

def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("hyperparameters")
    for name in Hyperparams.field_names():
        flag = "--" + name.replace("_", "-")
        default = _HP_FIELDS[name]
        if isinstance(default, bool):
            g.add_argument(flag, dest=name, default=None, type=_parse_bool, metavar="BOOL")
        else:
            g.add_argument(flag, dest=name, default=None, type=type(default),
                           metavar=type(default).__name__.upper(), help=f"default {default}")
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--ratings", help="ratings file: user item rating per line")
    p.add_argument("--trust", help="trust file: userA userB per line")
    p.add_argument("--delimiter", help="field delimiter; default splits on whitespace")
    p.add_argument("--mode", choices=("reference", "performance"), default=None)
    p.add_argument("--threads", type=int, default=None, help="worker processes; 0 = all cores")
    p.add_argument("--manifest", help="run manifest path")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uniwalk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write it to disk")
    _add_common(p)
    p.add_argument("--model", help="output model file")
    p.add_argument("--trace", help="per-iteration trace TSV (default: MODEL.trace.tsv)")

    p = sub.add_parser("eval", help="k-fold cross validation of one or more methods")
    _add_common(p)
    p.add_argument("--methods", help=f"comma list from {','.join(METHODS)}")
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--knn-k", dest="knn_k", type=int, default=None, help="neighbours for ucf/icf")
    p.add_argument("--mf-dim", dest="mf_dim", type=int, default=None)
    p.add_argument("--mf-lambda", dest="mf_lambda", type=float, default=None)
    p.add_argument("--mf-eta", dest="mf_eta", type=float, default=None)
    p.add_argument("--mf-epochs", dest="mf_epochs", type=int, default=None)
    p.add_argument("--output", help="results TSV")

    for name, helptext in (("recommend", "top-N items for a user"),
                           ("explain", "recommendations with explanations, as JSON")):
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        p.add_argument("--model", help="trained model file")
        p.add_argument("--target-user", dest="target_user")
        p.add_argument("--top-n", dest="top_n", type=int, default=None)
        p.add_argument("--output", help="output file (default stdout)")
        if name == "explain":
            p.add_argument("--k-expl", dest="k_expl", type=int, default=None)
    return parser


_NOT_SETTINGS = {"command", "config", "verbose"}


def flags_from_args(ns: argparse.Namespace) -> dict:
    return {k: v for k, v in vars(ns).items() if k not in _NOT_SETTINGS}


# ----------------------------------------------------------------- manifest

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, command: str, cfg: RunConfig, inputs: dict, outputs: dict, seconds: float) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "backend": _backend.BACKEND,
        "seed": cfg.hp.seed,
        "config": cfg.flat(),
        "inputs": {k: {"path": os.fspath(v), "sha256": sha256_file(v)} for k, v in inputs.items() if v},
        "outputs": {k: os.fspath(v) for k, v in outputs.items() if v},
        "wall_seconds": round(seconds, 3),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) in (None, "")]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)


def _load_data(cfg: RunConfig) -> Dataset:
    for p in (cfg.ratings, cfg.trust):
        if p and not os.path.isfile(p):
            raise FileNotFoundError(2, "no such file", p)
    return Dataset.load(cfg.ratings, cfg.trust, cfg.delimiter)


# ----------------------------------------------------------------- commands

def cmd_train(cfg: RunConfig) -> dict:
    _require(cfg, "ratings", "model")
    data = _load_data(cfg)
    fm = fit(data, cfg.hp)
    save_model(fm.model, fm.counts, fm.index, fm.stats, cfg.model)
    trace = cfg.trace or f"{cfg.model}.trace.tsv"
    _write_text(trace, fm.trace.to_tsv())
    log.info("best iteration %d; model written to %s", fm.trace.best_iteration, cfg.model)
    return {"model": cfg.model, "trace": trace}


def cmd_eval(cfg: RunConfig) -> dict:
    _require(cfg, "ratings")
    methods = cfg.method_list()
    if not methods:
        raise ConfigError("method list is empty")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown method(s) {', '.join(bad)}; expected one of {', '.join(METHODS)}")
    data = _load_data(cfg)
    split = kfold_split(data.ratings, cfg.folds, cfg.hp.seed)
    mcfg = MethodConfig(cfg.hp, MFHyperparams(dim=cfg.mf_dim, lam=cfg.mf_lambda, eta=cfg.mf_eta,
                                              epochs=cfg.mf_epochs, seed=cfg.hp.seed,
                                              clamp=cfg.hp.clamp_predictions), cfg.knn_k)
    results = []
    for m in methods:
        results.append(run_cv(m, data, split, mcfg, n_jobs=cfg.n_threads()))
        log.info("%s: rmse=%.4f mae=%.4f", m, results[-1].aggregate.rmse, results[-1].aggregate.mae)
    sys.stdout.write(results_table(results))
    if cfg.output:
        _write_text(cfg.output, results_tsv(results))
    return {"results": cfg.output}


def _recommender(cfg: RunConfig) -> Recommender:
    _require(cfg, "model", "ratings", "target_user")
    saved = load_model(cfg.model)
    data = _load_data(cfg)
    return Recommender(saved.model, saved.index, saved.stats, saved.counts, data)


def cmd_recommend(cfg: RunConfig) -> dict:
    rec = _recommender(cfg)
    recs, cold = rec.recommend_top_n(cfg.target_user, cfg.top_n)
    if cold:
        log.warning("user %r not in model; ranking by item bias", cfg.target_user)
    lines = ["item\tpredictedRating"] + [f"{r.item}\t{r.predictedRating:.6f}" for r in recs]
    _write_text(cfg.output, "\n".join(lines) + "\n")
    return {"output": cfg.output}


def cmd_explain(cfg: RunConfig) -> dict:
    rec = _recommender(cfg)
    rec.require_user(cfg.target_user)
    report = rec.build_report(cfg.target_user, cfg.top_n, cfg.k_expl)
    _write_text(cfg.output, report.to_json() + "\n")
    return {"output": cfg.output}


_HANDLERS = {"train": cmd_train, "eval": cmd_eval, "recommend": cmd_recommend, "explain": cmd_explain}


def _manifest_path(command: str, cfg: RunConfig) -> str | None:
    if cfg.manifest:
        return cfg.manifest
    anchor = cfg.model if command == "train" else cfg.output
    if anchor and anchor != "-":
        return f"{anchor}.manifest.json"
    return f"uniwalk-{command}.manifest.json"


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(ns.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = resolve_config(flags_from_args(ns), ns.config, environ)
        outputs = _HANDLERS[ns.command](cfg)
        inputs = {"ratings": cfg.ratings, "trust": cfg.trust}
        if ns.command in ("recommend", "explain"):
            inputs["model"] = cfg.model
        write_manifest(_manifest_path(ns.command, cfg), ns.command, cfg, inputs, outputs,
                       time.perf_counter() - t0)
    except ConfigError as exc:
        print(f"uniwalk: argument error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except ParseError as exc:
        print(f"uniwalk: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DivergenceError as exc:
        print(f"uniwalk: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except UnknownEntityError as exc:
        print(f"uniwalk: lookup error: {exc}", file=sys.stderr)
        return EXIT_LOOKUP
    except ModelFormatError as exc:
        print(f"uniwalk: cannot load model: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"uniwalk: I/O error: {name}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
