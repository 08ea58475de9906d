"""Class-name decomposition into verb/noun tokens and the per-class embedding table.

Action phrases are completed from a fill table (e.g. a bare verb gains a
generic object), then tokenized against a static part-of-speech lexicon.
Classes that end up without any noun token receive a placeholder noun vector:
the mean of every real noun vector in the table.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .errors import DescriptionError, TableError, VocabularyError

_TOKEN_SPLIT = re.compile(r"[^a-z0-9']+")


def _load_kv_lines(text: str) -> dict[str, str]:
    table: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" in line:
            key, value = line.split("\t", 1)
        else:
            key, value = line.split(None, 1)
        table[key.strip().lower()] = value.strip().lower()
    return table


def _packaged(name: str) -> str:
    return resources.files("synse.data").joinpath(name).read_text(encoding="utf-8")


def load_fill_table(path: str | Path) -> dict[str, str]:
    return _load_kv_lines(Path(path).read_text(encoding="utf-8"))


def load_pos_lexicon(path: str | Path) -> dict[str, str]:
    return _load_kv_lines(Path(path).read_text(encoding="utf-8"))


def default_fill_table() -> dict[str, str]:
    return _load_kv_lines(_packaged("fill_table.txt"))


def default_pos_lexicon() -> dict[str, str]:
    return _load_kv_lines(_packaged("pos_lexicon.txt"))


def tokenize(name: str) -> list[str]:
    """Lowercase and split on whitespace, hyphens, slashes and punctuation."""
    return [tok for tok in _TOKEN_SPLIT.split(name.lower()) if tok]


@dataclass(frozen=True)
class ClassDescription:
    class_id: int
    raw_name: str
    filled_name: str
    verb_tokens: tuple[str, ...]
    noun_tokens: tuple[str, ...]
    noun_is_placeholder: bool

    def __post_init__(self):
        if not self.verb_tokens:
            raise DescriptionError(f"class {self.class_id} ({self.raw_name!r}) has no verb")
        if self.noun_is_placeholder != (len(self.noun_tokens) == 0):
            raise DescriptionError(
                f"class {self.class_id}: placeholder flag inconsistent with noun tokens"
            )

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "raw_name": self.raw_name,
            "filled_name": self.filled_name,
            "verb_tokens": list(self.verb_tokens),
            "noun_tokens": list(self.noun_tokens),
            "noun_is_placeholder": self.noun_is_placeholder,
        }

    @staticmethod
    def from_dict(d: dict) -> "ClassDescription":
        return ClassDescription(
            class_id=int(d["class_id"]),
            raw_name=d["raw_name"],
            filled_name=d["filled_name"],
            verb_tokens=tuple(d["verb_tokens"]),
            noun_tokens=tuple(d["noun_tokens"]),
            noun_is_placeholder=bool(d["noun_is_placeholder"]),
        )


def fill_missing_pos(
    raw_name: str,
    fill_table: dict[str, str] | None = None,
    lexicon: dict[str, str] | None = None,
    class_id: int = 0,
) -> ClassDescription:
    """Complete *raw_name* via the fill table and decompose it into verb/noun tokens.

    A name with no verb under the lexicon raises DescriptionError; a name with
    no noun is flagged as a placeholder class. Idempotent: feeding the filled
    name back in yields the same description.
    """
    if not raw_name or not raw_name.strip():
        raise DescriptionError("class name must be non-empty")
    fill_table = default_fill_table() if fill_table is None else fill_table
    lexicon = default_pos_lexicon() if lexicon is None else lexicon

    key = raw_name.strip().lower()
    filled = fill_table.get(key, key)
    verbs: list[str] = []
    nouns: list[str] = []
    for token in tokenize(filled):
        tag = lexicon.get(token, "other")
        if tag == "verb":
            verbs.append(token)
        elif tag == "noun":
            nouns.append(token)
    if not verbs:
        raise DescriptionError(f"phrase {filled!r} contains no verb under the lexicon")
    return ClassDescription(
        class_id=class_id,
        raw_name=raw_name,
        filled_name=filled,
        verb_tokens=tuple(verbs),
        noun_tokens=tuple(nouns),
        noun_is_placeholder=not nouns,
    )


class WordVectorSource:
    """Token -> vector lookup backed by a plain dict or a container file."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int | None = None):
        self._vectors = {tok: np.asarray(vec, dtype=np.float64) for tok, vec in vectors.items()}
        if dim is None:
            if not self._vectors:
                raise TableError("word-vector source is empty and no dim was given")
            dim = next(iter(self._vectors.values())).shape[0]
        self.dim = int(dim)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def get(self, token: str) -> np.ndarray:
        return self._vectors[token]

    @staticmethod
    def load(path: str | Path) -> "WordVectorSource":
        arrays, meta = read_container(path)
        tokens = meta.get("tokens")
        vecs = arrays.get("vectors")
        if tokens is None or vecs is None:
            raise TableError(f"{path}: word-vector container must hold 'vectors' and token list")
        return WordVectorSource({tok: vecs[i] for i, tok in enumerate(tokens)})

    def save(self, path: str | Path) -> None:
        tokens = sorted(self._vectors)
        mat = np.stack([self._vectors[t] for t in tokens]).astype(np.float32)
        write_container(path, {"vectors": mat}, {"tokens": tokens, "dim": self.dim})


@dataclass(frozen=True)
class PosEmbeddingTable:
    """Per-class verb and noun embedding vectors, with placeholder provenance."""

    dim: int
    class_ids: tuple[int, ...]
    verb_vecs: np.ndarray  # (n_classes, dim)
    noun_vecs: np.ndarray  # (n_classes, dim)
    placeholder_ids: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "class_ids", tuple(int(c) for c in self.class_ids))
        object.__setattr__(self, "placeholder_ids", frozenset(int(c) for c in self.placeholder_ids))
        for name, mat in (("verb_vecs", self.verb_vecs), ("noun_vecs", self.noun_vecs)):
            arr = np.asarray(mat)
            if arr.shape != (len(self.class_ids), self.dim):
                raise TableError(f"{name} shape {arr.shape} != ({len(self.class_ids)}, {self.dim})")
            if not np.isfinite(arr).all():
                raise TableError(f"{name} contains non-finite entries")
        object.__setattr__(self, "_row", {c: i for i, c in enumerate(self.class_ids)})

    def has_class(self, class_id: int) -> bool:
        return int(class_id) in self._row

    def verb_vec(self, class_id: int) -> np.ndarray:
        return self.verb_vecs[self._row[int(class_id)]]

    def noun_vec(self, class_id: int) -> np.ndarray:
        return self.noun_vecs[self._row[int(class_id)]]

    def rows_for(self, labels: np.ndarray) -> np.ndarray:
        try:
            return np.array([self._row[int(l)] for l in labels], dtype=np.int64)
        except KeyError as exc:
            raise VocabularyError(f"class {exc.args[0]} missing from embedding table") from exc

    def validate(self, tolerance: float = 1e-4) -> None:
        """Check the placeholder invariant: placeholder noun rows equal the real-noun mean."""
        if not self.placeholder_ids:
            return
        real_rows = [i for i, c in enumerate(self.class_ids) if c not in self.placeholder_ids]
        if not real_rows:
            raise TableError("every class is a placeholder; noun mean undefined")
        mean = self.noun_vecs[real_rows].astype(np.float64).mean(axis=0)
        for cid in self.placeholder_ids:
            got = self.noun_vecs[self._row[cid]].astype(np.float64)
            if np.max(np.abs(got - mean)) > tolerance:
                raise TableError(f"placeholder noun vector for class {cid} is not the real-noun mean")


def build_embedding_table(
    descriptions: list[ClassDescription],
    word_vectors: WordVectorSource,
    dim: int | None = None,
) -> PosEmbeddingTable:
    """Mean-pool each class's verb and noun token vectors; fill placeholders last.

    The placeholder noun vector is the arithmetic mean over all classes that
    have a real noun, computed after every real noun vector is in place.
    """
    dim = word_vectors.dim if dim is None else int(dim)
    n = len(descriptions)
    verb_mat = np.zeros((n, dim), dtype=np.float64)
    noun_mat = np.zeros((n, dim), dtype=np.float64)
    placeholder_rows: list[int] = []

    def pooled(tokens: tuple[str, ...], desc: ClassDescription) -> np.ndarray:
        vecs = []
        for tok in tokens:
            if tok not in word_vectors:
                raise VocabularyError(
                    f"token {tok!r} of class {desc.class_id} ({desc.raw_name!r}) "
                    "has no word vector"
                )
            vec = word_vectors.get(tok)
            if vec.shape[0] != dim:
                raise TableError(
                    f"token {tok!r} has dimension {vec.shape[0]}, table expects {dim}"
                )
            vecs.append(vec)
        return np.mean(vecs, axis=0)

    for i, desc in enumerate(descriptions):
        verb_mat[i] = pooled(desc.verb_tokens, desc)
        if desc.noun_is_placeholder:
            placeholder_rows.append(i)
        else:
            noun_mat[i] = pooled(desc.noun_tokens, desc)

    real_rows = [i for i in range(n) if i not in set(placeholder_rows)]
    if placeholder_rows:
        if not real_rows:
            raise TableError("all classes are placeholders; the placeholder noun is undefined")
        noun_mat[placeholder_rows] = noun_mat[real_rows].mean(axis=0)

    return PosEmbeddingTable(
        dim=dim,
        class_ids=tuple(d.class_id for d in descriptions),
        verb_vecs=verb_mat.astype(np.float32),
        noun_vecs=noun_mat.astype(np.float32),
        placeholder_ids=frozenset(descriptions[i].class_id for i in placeholder_rows),
    )


def save_embedding_table(table: PosEmbeddingTable, path: str | Path) -> None:
    meta = {
        "dim": table.dim,
        "class_ids": list(table.class_ids),
        "placeholder_ids": sorted(table.placeholder_ids),
    }
    write_container(
        path,
        {"verb_vecs": table.verb_vecs.astype(np.float32), "noun_vecs": table.noun_vecs.astype(np.float32)},
        meta,
    )


def load_embedding_table(path: str | Path) -> PosEmbeddingTable:
    arrays, meta = read_container(path)
    return PosEmbeddingTable(
        dim=int(meta["dim"]),
        class_ids=tuple(meta["class_ids"]),
        verb_vecs=arrays["verb_vecs"],
        noun_vecs=arrays["noun_vecs"],
        placeholder_ids=frozenset(meta.get("placeholder_ids", [])),
    )
