"""Corpus loading, embeddings, and evaluation metrics.

Three corpus formats are supported:

  tsv_label_text   one example per line, "label<TAB>token token ..."
  trec_colon       one example per line, "COARSE:fine token token ...";
                   only the coarse label before the colon is kept
  conll            one token per line, columns separated by whitespace with
                   the token first and the tag last; blank lines separate
                   sentences, -DOCSTART- lines are skipped

Tag sequences are normalized to IOB2 on load: a chunk-internal tag that
opens an entity becomes an explicit begin tag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CorpusError", "Vocabulary", "LabeledCorpus", "TaggedCorpus", "CorpusSplits",
    "load_classification_corpus", "save_classification_corpus",
    "load_conll", "save_conll", "to_iob2",
    "load_embeddings", "random_embeddings",
    "accuracy", "entity_spans", "entity_f1",
]

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


class CorpusError(ValueError):
    """Raised on malformed corpus or embedding files."""


@dataclass
class Vocabulary:
    """Token-to-id table; id 0 is padding, id 1 the unknown token."""

    tokens: list[str] = field(default_factory=lambda: [PAD_TOKEN, UNK_TOKEN])
    index: dict[str, int] = None

    def __post_init__(self):
        if self.index is None:
            self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def add(self, token: str) -> int:
        if token not in self.index:
            self.index[token] = len(self.tokens)
            self.tokens.append(token)
        return self.index[token]

    def id(self, token: str) -> int:
        return self.index.get(token, self.index[UNK_TOKEN])


@dataclass
class LabeledCorpus:
    sentences: list[list[int]]
    labels: list[int]
    label_names: list[str]
    vocab: Vocabulary

    def examples(self) -> list[tuple[list[int], int]]:
        return list(zip(self.sentences, self.labels))


@dataclass
class TaggedCorpus:
    sentences: list[list[int]]
    tag_seqs: list[list[int]]
    tag_names: list[str]
    vocab: Vocabulary

    def examples(self) -> list[tuple[list[int], list[int]]]:
        return list(zip(self.sentences, self.tag_seqs))


@dataclass
class CorpusSplits:
    """What the trainer consumes: train/dev (and optionally test) examples."""

    train: list
    dev: list
    test: list | None = None


def _parse_line(line: str, fmt: str, path, lineno: int):
    if fmt == "tsv_label_text":
        if "\t" not in line:
            raise CorpusError(f"{path}:{lineno}: expected 'label<TAB>text'")
        label, text = line.split("\t", 1)
        label = label.strip()
        tokens = text.split()
    elif fmt == "trec_colon":
        head, _, rest = line.partition(" ")
        if ":" not in head:
            raise CorpusError(f"{path}:{lineno}: expected 'COARSE:fine question'")
        label = head.split(":", 1)[0]
        tokens = rest.split()
    else:
        raise CorpusError(f"unknown classification format {fmt!r}")
    if not label:
        raise CorpusError(f"{path}:{lineno}: empty label")
    if not tokens:
        raise CorpusError(f"{path}:{lineno}: sentence has no tokens")
    return label, tokens


def load_classification_corpus(path, fmt: str, lowercase: bool = True,
                               vocab: Vocabulary | None = None,
                               label_names: list[str] | None = None) -> LabeledCorpus:
    """Load a one-sentence-per-line corpus.

    Pass the training split's vocab and label_names when loading dev/test
    so ids stay aligned; with a fixed label table an unseen label string
    is an error.
    """
    grow_vocab = vocab is None
    if vocab is None:
        vocab = Vocabulary()
    grow_labels = label_names is None
    labels_list = [] if label_names is None else list(label_names)
    label_index = {name: i for i, name in enumerate(labels_list)}

    sentences, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            label, tokens = _parse_line(line, fmt, path, lineno)
            if lowercase:
                tokens = [t.lower() for t in tokens]
            if label not in label_index:
                if not grow_labels:
                    raise CorpusError(f"{path}:{lineno}: unknown label {label!r}")
                label_index[label] = len(labels_list)
                labels_list.append(label)
            if grow_vocab:
                ids = [vocab.add(t) for t in tokens]
            else:
                ids = [vocab.id(t) for t in tokens]
            sentences.append(ids)
            labels.append(label_index[label])
    if not sentences:
        raise CorpusError(f"{path}: corpus is empty")
    return LabeledCorpus(sentences, labels, labels_list, vocab)


def save_classification_corpus(corpus: LabeledCorpus, path, fmt: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ids, label in zip(corpus.sentences, corpus.labels):
            text = " ".join(corpus.vocab.tokens[i] for i in ids)
            name = corpus.label_names[label]
            if fmt == "tsv_label_text":
                fh.write(f"{name}\t{text}\n")
            elif fmt == "trec_colon":
                fh.write(f"{name}:x {text}\n")
            else:
                raise CorpusError(f"unknown classification format {fmt!r}")


def to_iob2(tags: list[str]) -> list[str]:
    """Normalize a tag sequence so every entity starts with B-.

    Chunk-internal tags that open an entity (sequence start, after O, or
    after a different entity type) are rewritten to begin tags; everything
    else passes through.  Applying it twice changes nothing.
    """
    out = []
    prev = "O"
    for tag in tags:
        if tag.startswith("I-"):
            kind = tag[2:]
            if prev == "O" or (prev[2:] if len(prev) > 2 else "") != kind:
                tag = "B-" + kind
        elif tag != "O" and not tag.startswith("B-"):
            raise CorpusError(f"malformed chunk tag {tag!r}")
        out.append(tag)
        prev = tag
    return out


def load_conll(path, vocab: Vocabulary | None = None,
               tag_names: list[str] | None = None) -> TaggedCorpus:
    """Load a column-format tagging corpus; tags are normalized to IOB2."""
    grow_vocab = vocab is None
    if vocab is None:
        vocab = Vocabulary()
    grow_tags = tag_names is None
    tags_list = [] if tag_names is None else list(tag_names)
    tag_index = {name: i for i, name in enumerate(tags_list)}

    sentences, tag_seqs = [], []
    cur_tokens: list[str] = []
    cur_tags: list[str] = []
    ncols = None

    def flush(lineno):
        nonlocal cur_tokens, cur_tags
        if not cur_tokens:
            return
        ids = [vocab.add(t) if grow_vocab else vocab.id(t) for t in cur_tokens]
        tag_ids = []
        for tag in to_iob2(cur_tags):
            if tag not in tag_index:
                if not grow_tags:
                    raise CorpusError(f"{path}:{lineno}: unknown tag {tag!r}")
                tag_index[tag] = len(tags_list)
                tags_list.append(tag)
            tag_ids.append(tag_index[tag])
        sentences.append(ids)
        tag_seqs.append(tag_ids)
        cur_tokens, cur_tags = [], []

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                flush(lineno)
                continue
            cols = line.split()
            if cols[0] == "-DOCSTART-":
                flush(lineno)
                continue
            if len(cols) < 2:
                raise CorpusError(f"{path}:{lineno}: need at least token and tag columns")
            if ncols is None:
                ncols = len(cols)
            elif len(cols) != ncols:
                raise CorpusError(f"{path}:{lineno}: ragged columns "
                                  f"({len(cols)} here, {ncols} earlier)")
            cur_tokens.append(cols[0])
            cur_tags.append(cols[-1])
        flush("eof")
    if not sentences:
        raise CorpusError(f"{path}: corpus is empty")
    return TaggedCorpus(sentences, tag_seqs, tags_list, vocab)


def save_conll(corpus: TaggedCorpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ids, tag_ids in zip(corpus.sentences, corpus.tag_seqs):
            for tid, gid in zip(ids, tag_ids):
                fh.write(f"{corpus.vocab.tokens[tid]} {corpus.tag_names[gid]}\n")
            fh.write("\n")


def load_embeddings(path, vocab: Vocabulary, dim: int) -> np.ndarray:
    """Read whitespace-separated word vectors into a (V, dim) float64 table.

    Tokens missing from the file get zero vectors, as do padding and
    unknown.  The returned table is marked read-only: embeddings are never
    trained.
    """
    table = np.zeros((len(vocab), dim))
    wanted = vocab.index
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            token, values = parts[0], parts[1:]
            if token not in wanted:
                continue
            if len(values) != dim:
                raise CorpusError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: bad float in vector") from exc
            table[wanted[token]] = vec
    table[0] = 0.0
    table[vocab.index[UNK_TOKEN]] = 0.0
    table.flags.writeable = False
    return table


def random_embeddings(vocab: Vocabulary, dim: int, rng: np.random.Generator,
                      scale: float = 1.0) -> np.ndarray:
    """Gaussian stand-in table for runs without pretrained vectors; padding
    and unknown stay zero and the table is read-only like a loaded one."""
    table = rng.normal(0.0, scale, size=(len(vocab), dim))
    table[0] = 0.0
    table[vocab.index[UNK_TOKEN]] = 0.0
    table.flags.writeable = False
    return table


def accuracy(predicted, gold) -> float:
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predictions for {len(gold)} references")
    if not gold:
        raise ValueError("empty evaluation set")
    hits = sum(1 for p, g in zip(predicted, gold) if p == g)
    return hits / len(gold)


def entity_spans(tags: list[str]) -> set[tuple[str, int, int]]:
    """(type, start, end) spans of an IOB2 sequence, end exclusive."""
    spans = set()
    start = None
    kind = None
    for i, tag in enumerate(tags):
        if tag.startswith("B-"):
            if start is not None:
                spans.add((kind, start, i))
            start, kind = i, tag[2:]
        elif tag.startswith("I-"):
            if start is None or tag[2:] != kind:
                raise CorpusError(f"dangling {tag!r} at position {i}")
        elif tag == "O":
            if start is not None:
                spans.add((kind, start, i))
            start, kind = None, None
        else:
            raise CorpusError(f"malformed chunk tag {tag!r}")
    if start is not None:
        spans.add((kind, start, len(tags)))
    return spans


def entity_f1(predicted: list[list[str]], gold: list[list[str]]) -> tuple[float, float, float]:
    """Span-exact precision, recall and F1 over tag-name sequences.

    Gold must be valid IOB2.  Predictions are normalized first (a model is
    free to emit a dangling chunk-internal tag; it is read as opening an
    entity), then matched on exact (type, start, end).
    """
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted sequences for {len(gold)} gold")
    match = pred_total = gold_total = 0
    for p_tags, g_tags in zip(predicted, gold):
        if len(p_tags) != len(g_tags):
            raise ValueError("prediction and reference lengths differ")
        p_spans = entity_spans(to_iob2(p_tags))
        g_spans = entity_spans(g_tags)
        match += len(p_spans & g_spans)
        pred_total += len(p_spans)
        gold_total += len(g_spans)
    precision = match / pred_total if pred_total else 0.0
    recall = match / gold_total if gold_total else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if (precision + recall) else 0.0
    return precision, recall, f1
