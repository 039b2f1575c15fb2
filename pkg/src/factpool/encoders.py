"""Fact-text encoders producing d-dimensional edge embeddings.

Three encoder families share one interface:

  * hash-bag: every token maps to a fixed seeded pseudo-random unit vector;
    a fact embedding is the mean of its token vectors.  Needs no trained
    model, so retrieval and pooling tests can run standalone.
  * shared-toy-encoder: runs a frozen snapshot of the QA model's own token
    embedder and transformer trunk over the fact text, so edge embeddings
    live in the same space the QA model starts from.
  * external-file: reads embeddings from a cache file and never computes.

Token pooling is `mean` (average over text-token states) or `cls` (state of
the prepended classification token).  The hash-bag encoder has no cls token
and rejects cls pooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from factpool.kg import Fact, Subgraph, text_tokens
from factpool.tokenizer import CLS_ID, Tokenizer
from factpool.transformer import trunk_forward
from factpool.util import atomic_write_bytes, derive_seed
from factpool.verbalize import TemplateTable, verbalize


@dataclass
class EdgeEmbedding:
    fact: Fact
    vector: np.ndarray


class UncachedFactError(KeyError):
    pass


class HashBagEncoder:
    """Mean of fixed seeded unit vectors, one per token."""

    def __init__(self, dim: int, seed: int = 0, token_pooling: str = "mean"):
        if token_pooling != "mean":
            raise ValueError("hash-bag encoder has no cls token; use mean pooling")
        self.dim = dim
        self.seed = seed
        self._token_vectors: dict[str, np.ndarray] = {}
        self._memo: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._token_vectors.get(token)
        if vec is None:
            rng = np.random.default_rng(derive_seed(self.seed, "hash-bag", token))
            vec = rng.standard_normal(self.dim)
            vec /= np.linalg.norm(vec)
            self._token_vectors[token] = vec
        return vec

    def encode_text(self, text: str) -> np.ndarray:
        cached = self._memo.get(text)
        if cached is not None:
            return cached
        tokens = text_tokens(text)
        if not tokens:
            raise ValueError(f"cannot encode empty text: {text!r}")
        vec = np.mean([self.token_vector(t) for t in tokens], axis=0)
        self._memo[text] = vec
        return vec

    def encode_fact_text(self, fact: Fact, text: str) -> np.ndarray:
        return self.encode_text(text)


class ToyTrunkEncoder:
    """Frozen snapshot of the QA model's embedder + trunk as a text encoder."""

    def __init__(
        self,
        snapshot: dict[str, np.ndarray],
        L: int,
        heads: int,
        tokenizer: Tokenizer,
        token_pooling: str = "mean",
        max_tokens: int = 64,
    ):
        self.snapshot = {name: arr.copy() for name, arr in snapshot.items()}
        self.L = L
        self.heads = heads
        self.tokenizer = tokenizer
        self.token_pooling = token_pooling
        self.max_tokens = max_tokens
        self.dim = snapshot["tok_emb"].shape[1]
        self._memo: dict[str, np.ndarray] = {}

    def encode_text(self, text: str) -> np.ndarray:
        cached = self._memo.get(text)
        if cached is not None:
            return cached
        ids = self.tokenizer.encode_text(text)
        if not ids:
            raise ValueError(f"cannot encode empty text: {text!r}")
        ids = ids[: self.max_tokens - 1]
        seq = np.array([[CLS_ID] + ids], dtype=np.int64)
        mask = np.ones_like(seq, dtype=bool)
        # Position 0 carries the [CLS] embedding itself.
        cls_row = self.snapshot["tok_emb"][CLS_ID][None, :]
        states, _ = trunk_forward(self.snapshot, self.L, self.heads, seq, mask, cls_row)
        if self.token_pooling == "cls":
            vec = states[0, 0, :].copy()
        else:
            vec = states[0, 1:, :].mean(axis=0)
        self._memo[text] = vec
        return vec

    def encode_fact_text(self, fact: Fact, text: str) -> np.ndarray:
        return self.encode_text(text)


class FileBackedEncoder:
    """Serves embeddings from a cache file; unknown facts are an error."""

    def __init__(self, path: str):
        self.entries, self.dim = read_embedding_cache(path)

    def encode_fact_text(self, fact: Fact, text: str) -> np.ndarray:
        key = fact.key()
        vec = self.entries.get(key)
        if vec is None:
            raise UncachedFactError(f"uncached fact: {key!r}")
        return vec


def encode_fact(vf, encoder) -> EdgeEmbedding:
    """Encode one verbalized fact."""
    return EdgeEmbedding(fact=vf.fact, vector=encoder.encode_fact_text(vf.fact, vf.text))


def encode_subgraph(
    sub: Subgraph,
    templates: TemplateTable,
    encoder,
    cache_path: str | None = None,
) -> list[EdgeEmbedding]:
    """One embedding per edge, in canonical (head, relation, tail) order.

    With a cache path, existing entries bypass encoding and new entries are
    merged back into the file.
    """
    cached: dict[str, np.ndarray] = {}
    dim = getattr(encoder, "dim", None)
    if cache_path is not None:
        try:
            cached, dim = read_embedding_cache(cache_path)
        except FileNotFoundError:
            cached = {}
    out: list[EdgeEmbedding] = []
    dirty = False
    for fact in sub.sorted_edges():
        key = fact.key()
        vec = cached.get(key)
        if vec is None:
            vec = encode_fact(verbalize(fact, templates), encoder).vector
            cached[key] = vec
            dirty = True
        out.append(EdgeEmbedding(fact=fact, vector=vec))
    if cache_path is not None and dirty:
        if dim is None:
            dim = out[0].vector.shape[0] if out else 0
        write_embedding_cache(cache_path, cached, dim)
    return out


# --- embedding cache file ----------------------------------------------------
#
# header: magic b"FPEMC001", u32 d, u64 record count
# record: u32 key length, key utf-8, u32 d, d float64 little-endian

_CACHE_MAGIC = b"FPEMC001"


def write_embedding_cache(path: str, entries: dict[str, np.ndarray], dim: int) -> None:
    import io
    import struct

    buf = io.BytesIO()
    buf.write(_CACHE_MAGIC)
    buf.write(struct.pack("<IQ", dim, len(entries)))
    for key in sorted(entries):
        vec = np.ascontiguousarray(entries[key], dtype="<f8")
        if vec.shape != (dim,):
            raise ValueError(f"entry {key!r} has shape {vec.shape}, expected ({dim},)")
        encoded = key.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<I", dim))
        buf.write(vec.tobytes())
    atomic_write_bytes(path, buf.getvalue())


def read_embedding_cache(path: str):
    import struct
    from pathlib import Path

    data = Path(path).read_bytes()
    if data[:8] != _CACHE_MAGIC:
        raise ValueError(f"{path}: not an embedding cache file")
    dim, count = struct.unpack_from("<IQ", data, 8)
    offset = 8 + 12
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (key_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        key = data[offset : offset + key_len].decode("utf-8")
        offset += key_len
        (rec_dim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        if rec_dim != dim:
            raise ValueError(f"{path}: record {key!r} width {rec_dim} != header width {dim}")
        entries[key] = np.frombuffer(data, dtype="<f8", count=dim, offset=offset).copy()
        offset += 8 * dim
    return entries, dim
