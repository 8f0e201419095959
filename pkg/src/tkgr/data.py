"""Loading raw TSV splits and the prepared (id-encoded) dataset directory."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .graph import DatasetSplit, Quadruple, TemporalKG, TimeNormalizer, Vocab, build_graph, parse_quadruples


@dataclass
class Dataset:
    split: DatasetSplit
    entity_vocab: Vocab
    relation_vocab: Vocab
    normalizer: TimeNormalizer

    def train_graph(self) -> TemporalKG:
        return build_graph(self.split.train, self.entity_vocab, self.relation_vocab,
                           known_quads=self.split.all())

    def history_graph(self, upto: str = "test") -> TemporalKG:
        """Graph over train (+valid, +test) facts; used as reasoning history at evaluation."""
        quads = list(self.split.train) + list(self.split.valid)
        if upto == "test":
            quads += list(self.split.test)
        return build_graph(quads, self.entity_vocab, self.relation_vocab,
                           known_quads=self.split.all())

    def counts(self) -> dict:
        s = self.split
        return {"train": len(s.train), "valid": len(s.valid), "test": len(s.test),
                "entities": len(self.entity_vocab), "relations": len(self.relation_vocab),
                "time_origin": self.normalizer.origin, "time_unit": self.normalizer.unit}


def load_raw(train_path, valid_path=None, test_path=None, entity_vocab: Vocab | None = None,
             relation_vocab: Vocab | None = None) -> Dataset:
    """Parse raw TSV files; with vocabularies given, all files are parsed frozen."""
    streams = []
    for path in (train_path, valid_path, test_path):
        if path is None:
            streams.append([])
        else:
            with open(path, encoding="utf-8") as fh:
                streams.append(fh.readlines())
    return from_lines(*streams, entity_vocab=entity_vocab, relation_vocab=relation_vocab)


def from_lines(train_lines, valid_lines=(), test_lines=(), entity_vocab: Vocab | None = None,
               relation_vocab: Vocab | None = None) -> Dataset:
    mode = "frozen" if entity_vocab is not None and relation_vocab is not None else "build"
    ev = entity_vocab if entity_vocab is not None else Vocab()
    rv = relation_vocab if relation_vocab is not None else Vocab()
    parts = []
    for lines in (train_lines, valid_lines, test_lines):
        quads, ev, rv = parse_quadruples(lines, ev, rv, mode)
        parts.append(quads)
    norm = TimeNormalizer.fit(q.timestamp for part in parts for q in part)
    split = DatasetSplit(*(norm.apply(p) for p in parts))
    split.validate()
    return Dataset(split, ev, rv, norm)


def from_synthetic(data) -> Dataset:
    """Encode a :class:`~tkgr.synthetic.SyntheticDataset` without touching disk."""
    def lines(facts):
        return [f"{s}\t{r}\t{o}\t{t}\n" for s, r, o, t in facts]
    return from_lines(lines(data.train), lines(data.valid), lines(data.test))


def write_prepared(ds: Dataset, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "entities.tsv", "w", encoding="utf-8") as fh:
        ds.entity_vocab.dump(fh)
    with open(out / "relations.tsv", "w", encoding="utf-8") as fh:
        ds.relation_vocab.dump(fh)
    for name in ("train", "valid", "test"):
        with open(out / f"{name}.tsv", "w", encoding="utf-8") as fh:
            for q in getattr(ds.split, name):
                fh.write(f"{q.subject}\t{q.relation}\t{q.object}\t{q.timestamp}\n")
    (out / "report.json").write_text(json.dumps(ds.counts(), indent=2) + "\n")


def load_prepared(data_dir) -> Dataset:
    d = Path(data_dir)
    with open(d / "entities.tsv", encoding="utf-8") as fh:
        ev = Vocab.load(fh)
    with open(d / "relations.tsv", encoding="utf-8") as fh:
        rv = Vocab.load(fh)
    parts = []
    for name in ("train", "valid", "test"):
        quads = []
        with open(d / f"{name}.tsv", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    quads.append(Quadruple(*map(int, line.split("\t")[:4])))
        parts.append(quads)
    report = json.loads((d / "report.json").read_text())
    split = DatasetSplit(*parts)
    split.validate()
    return Dataset(split, ev, rv, TimeNormalizer(report["time_origin"], report["time_unit"]))
