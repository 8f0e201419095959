"""Command-line entry point: ``tkgr <subcommand> ...``.

Every subcommand exits 0 on success. Failures print exactly one line,
``error: <category>: <message>``, to stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import difflib
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import KEY_HELP, RunConfig
from .data import Dataset, load_prepared, load_raw, write_prepared
from .env import QueryTask
from .errors import ConfigError, FileError, TKGRError, UsageError, VocabError
from .evaluation import evaluate
from .graph import Vocab, _parse_time
from .model import Reasoner
from .params import load_checkpoint, save_checkpoint
from .sampler import config_hash, sample_demonstrations, write_demo_cache
from .synthetic import generate
from .trainer import METRICS_HEADER, Trainer

log = logging.getLogger("tkgr")

OUTPUT_ROOT_ENV = "TKGR_OUTPUT_ROOT"


def default_output(name: str) -> str:
    return str(Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / name)


# -- config handling ---------------------------------------------------------
def _parse_value(key: str, raw):
    """Coerce a YAML/flag value to the declared type of ``key``."""
    type_name, default = RunConfig.keys()[key]
    value = yaml.safe_load(raw) if isinstance(raw, str) and type_name != "str" else raw
    try:
        if type_name == "bool":
            if not isinstance(value, bool):
                raise ValueError
        elif type_name == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError
        elif type_name == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError
            value = float(value)
        elif type_name == "str":
            value = "" if value is None else str(value)
        elif key == "query_relations":
            if value is not None:
                if isinstance(value, (str, int)):
                    value = [value]
                value = list(value)
    except ValueError:
        raise ConfigError(f"{key}: expected {type_name}, got {raw!r}") from None
    return value


def load_config_file(path) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileError(f"config file not found: {p}")
    data = yaml.safe_load(p.read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping of keys to values")
    keys = RunConfig.keys()
    unknown = sorted(set(data) - set(keys))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    return {k: _parse_value(k, v) for k, v in data.items()}


def effective_config(args) -> dict:
    flat = {k: default for k, (_, default) in RunConfig.keys().items()}
    flat.update(load_config_file(getattr(args, "config", None)))
    for key in RunConfig.keys():
        raw = getattr(args, key, None)
        if raw is not None:
            flat[key] = _parse_value(key, raw)
    return flat


def resolve_relations(names, vocab: Vocab):
    """Map relation names (or ids) in ``query_relations`` to ids."""
    if names is None:
        return None
    out = []
    for n in names:
        if isinstance(n, int):
            if not 0 <= n < len(vocab):
                raise VocabError(f"relation id {n} out of range")
            out.append(n)
        else:
            out.append(lookup(vocab, str(n), "relation"))
    return out


def lookup(vocab: Vocab, name: str, kind: str) -> int:
    if name in vocab:
        return vocab[name]
    close = difflib.get_close_matches(name, vocab.names, n=5, cutoff=0.5)
    hint = f"; did you mean {', '.join(repr(c) for c in close)}?" if close else ""
    raise VocabError(f"unknown {kind} {name!r}{hint}")


def add_config_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("config keys (each overrides the --config file)")
    for key, (type_name, default) in RunConfig.keys().items():
        group.add_argument(f"--{key}", metavar="VALUE", default=None,
                           help=f"{KEY_HELP.get(key, '')} [{type_name}, default: {default!r}]")


# -- subcommands -------------------------------------------------------------------
def cmd_prepare(args):
    ev = rv = None
    if args.entity_vocab or args.relation_vocab:
        if not (args.entity_vocab and args.relation_vocab):
            raise UsageError("--entity-vocab and --relation-vocab must be given together")
        with open(args.entity_vocab, encoding="utf-8") as fh:
            ev = Vocab.load(fh)
        with open(args.relation_vocab, encoding="utf-8") as fh:
            rv = Vocab.load(fh)
    ds = load_raw(args.train, args.valid, args.test, ev, rv)
    out = args.out or default_output("prepared")
    write_prepared(ds, out)
    counts = ds.counts()
    print(f"prepared {out}")
    for k in ("train", "valid", "test", "entities", "relations"):
        print(f"  {k:<10} {counts[k]}")
    return 0


def cmd_gen_synthetic(args):
    data = generate(args.entities, args.relations, args.timestamps, args.patterns,
                    args.background, args.seed)
    out = args.out or default_output("synthetic")
    data.write(out)
    print(f"wrote {out}: train {len(data.train)}, valid {len(data.valid)}, test {len(data.test)}, "
          f"planted {len(data.planted)}")
    return 0


def _build_run(flat: dict) -> tuple[RunConfig, Dataset]:
    if not flat.get("data_dir"):
        raise ConfigError("data_dir is required")
    ds = load_prepared_checked(flat["data_dir"])
    flat = dict(flat)
    flat["query_relations"] = resolve_relations(flat.get("query_relations"), ds.relation_vocab)
    return RunConfig.from_flat(flat), ds


def load_prepared_checked(path) -> Dataset:
    if not Path(path, "report.json").exists():
        raise FileError(f"no prepared dataset in {path}")
    return load_prepared(path)


def _write_config(run: RunConfig, out: Path):
    text = yaml.safe_dump(run.to_flat(), sort_keys=True)
    (out / "config.yaml").write_text(text)
    return text


def cmd_train(args):
    flat = effective_config(args)
    if not flat.get("out_dir"):
        flat["out_dir"] = default_output("train")
    run, ds = _build_run(flat)
    cfg = run.train
    out = Path(run.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = _write_config(run, out)
    print("effective config:")
    print(text.rstrip())
    model = Reasoner(ds.train_graph(), cfg)
    if run.resume:
        if not Path(run.resume).exists():
            raise FileError(f"checkpoint not found: {run.resume}")
        arrays, _, _ = load_checkpoint(run.resume)
        model.store.load_arrays(arrays)
    trainer = Trainer(model, ds.split.train, ds.split.valid, ds.history_graph("valid"))
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    meta = run.to_flat()
    best = -1.0
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(METRICS_HEADER + "\n")
        for epoch in range(cfg.epochs):
            last = epoch == cfg.epochs - 1
            validate = bool(ds.split.valid) and (last or (epoch + 1) % max(run.eval_every, 1) == 0)
            m = trainer.train_epoch(validate=validate)
            if not run.wall_clock:
                m.seconds = 0.0
            fh.write(m.csv_row() + "\n")
            fh.flush()
            print(f"epoch {epoch}: reward {m.mean_reward:.4f} terminal {m.mean_terminal:.4f} "
                  f"valid_mrr {m.valid_mrr:.4f}", flush=True)
            if run.checkpoint_every and (epoch + 1) % run.checkpoint_every == 0:
                save_checkpoint(model.store, meta, ckpt_dir / f"epoch_{epoch + 1:04d}.ckpt")
            if validate and m.valid_mrr > best:
                best = m.valid_mrr
                save_checkpoint(model.store, meta, out / "best.ckpt")
    save_checkpoint(model.store, meta, out / "final.ckpt")
    print(f"wrote {out / 'metrics.csv'} and {out / 'final.ckpt'}")
    return 0


def load_model(checkpoint, data_dir=None):
    """Rebuild the model of a checkpoint; returns (model, run config, dataset)."""
    if not Path(checkpoint).exists():
        raise FileError(f"checkpoint not found: {checkpoint}")
    arrays, meta, _ = load_checkpoint(checkpoint)
    if data_dir:
        meta = {**meta, "data_dir": data_dir}
    run = RunConfig.from_flat(meta)
    ds = load_prepared_checked(run.data_dir)
    model = Reasoner(ds.history_graph("test"), run.train)
    model.store.load_arrays(arrays)
    return model, run, ds


def cmd_eval(args):
    model, run, ds = load_model(args.checkpoint, args.data_dir)
    facts = getattr(ds.split, args.split)
    if not facts:
        raise UsageError(f"{args.split} split is empty")
    report, results = evaluate(model.policy, facts, model.graph, run.train.query_relations,
                               args.beam_width)
    out = Path(args.out or default_output("eval"))
    out.mkdir(parents=True, exist_ok=True)
    (out / f"metrics_{args.split}.csv").write_text(report.to_csv())
    (out / f"metrics_{args.split}.txt").write_text(report.to_table())
    with open(out / f"ranks_{args.split}.tsv", "w", encoding="utf-8") as fh:
        g = model.graph
        for r in results:
            q = r.query
            fh.write(f"{g.entity_name(q.subject)}\t{g.relation_name(q.relation)}\t"
                     f"{g.entity_name(q.gold)}\t{q.time}\t{r.rank}\n")
    print(report.to_table(), end="")
    return 0


def _time_arg(raw: str, ds: Dataset) -> int:
    return ds.normalizer(_parse_time(raw, 0))


def render_path(path, graph) -> str:
    """``e --[r @ t]--> e'`` chain of the real edges of a beam path."""
    steps = [a for a in path.actions if a[1] != graph.stop_relation]
    if not steps:
        start = path.actions[0][0] if path.actions else None
        return f"{graph.entity_name(start)} (no move)"
    text = graph.entity_name(steps[0][0])
    for s, r, o, t in steps:
        text += f" --[{graph.relation_name(r)} @ {t}]--> {graph.entity_name(o)}"
    return text


def explain(model, query: QueryTask, top_k: int, beam_width=None):
    paths = model.policy.beam_search(query, beam_width)
    return paths[:top_k]


def cmd_explain(args):
    if args.top_k < 1:
        raise UsageError("--top-k must be >= 1")
    model, run, ds = load_model(args.checkpoint, args.data_dir)
    ev, rv = ds.entity_vocab, ds.relation_vocab
    rel = lookup(rv, args.relation, "relation")
    if (args.subject is None) == (args.object is None):
        raise UsageError("give exactly one of --subject or --object")
    t = _time_arg(args.time, ds)
    R = len(rv)
    if args.subject is not None:
        query = QueryTask(lookup(ev, args.subject, "entity"), rel, None, t)
    else:
        query = QueryTask(lookup(ev, args.object, "entity"), rel + R, None, t)
    g = model.graph
    for i, p in enumerate(explain(model, query, args.top_k, args.beam_width), 1):
        print(f"{i}\t{p.prob:.4f}\t{render_path(p, g)}")
    return 0


def cmd_sample_demos(args):
    flat = effective_config(args)
    run, ds = _build_run(flat)
    cfg = run.train
    model = Reasoner(ds.train_graph(), cfg)
    facts = getattr(ds.split, args.split)
    rng = np.random.default_rng(cfg.seed)
    queries = Trainer(model, facts).epoch_queries(facts)
    demos = []
    missing = 0
    for q in queries:
        found = sample_demonstrations(q, model.env, cfg.max_steps, cfg.n_demos, rng, cfg.frontier_cap)
        missing += not found
        demos.extend(found)
    out = Path(args.out or default_output("demos.tsv"))
    out.parent.mkdir(parents=True, exist_ok=True)
    settings = {k: getattr(cfg, k) for k in ("max_steps", "n_demos", "frontier_cap", "action_cap",
                                             "time_constraint", "seed")}
    write_demo_cache(out, demos, model.graph.fingerprint(), config_hash(settings))
    print(f"wrote {len(demos)} demonstrations for {len(queries)} queries "
          f"({missing} without any) to {out}")
    return 0


# -- parser ---------------------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tkgr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="parse raw TSV splits into an id-encoded dataset")
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--entity-vocab", help="freeze the entity vocabulary to this id<TAB>name file")
    p.add_argument("--relation-vocab", help="freeze the relation vocabulary")
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/prepared)")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("gen-synthetic", help="write a toy dataset with a planted 2-hop rule")
    p.add_argument("--entities", type=int, default=50)
    p.add_argument("--relations", type=int, default=5)
    p.add_argument("--timestamps", type=int, default=40)
    p.add_argument("--patterns", type=int, default=200)
    p.add_argument("--background", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/synthetic)")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a reasoner; writes metrics.csv and checkpoints")
    p.add_argument("--config", help="YAML file of config keys")
    add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="time-aware filtered MRR and Hits@k of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--data-dir", help="override the dataset directory stored in the checkpoint")
    p.add_argument("--beam-width", type=int)
    p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/eval)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="print the top beam paths for one query")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--subject", help="query subject name (predict the object)")
    p.add_argument("--object", help="query object name (predict the subject)")
    p.add_argument("--relation", required=True)
    p.add_argument("--time", required=True, help="raw timestamp as in the input files")
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--beam-width", type=int)
    p.add_argument("--data-dir")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("sample-demos", help="write demonstrations for a split to a cache file")
    p.add_argument("--config", help="YAML file of config keys")
    p.add_argument("--split", choices=("train", "valid", "test"), default="train")
    p.add_argument("--out", help=f"output file (default: ${OUTPUT_ROOT_ENV}/demos.tsv)")
    add_config_flags(p)
    p.set_defaults(func=cmd_sample_demos)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except TKGRError as exc:
        msg, category = str(exc), exc.category
    except FileNotFoundError as exc:
        msg, category = f"{exc.strerror}: {exc.filename}", "file"
    except OSError as exc:
        msg, category = str(exc), "file"
    except ValueError as exc:
        msg, category = str(exc), "argument"
    except FloatingPointError as exc:
        msg, category = str(exc), "numeric"
    print(f"error: {category}: {' '.join(msg.split())}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
