from __future__ import annotations

import json

import numpy as np
import pytest

from comret.core import QueryRecord, as_embedding
from comret.store import IndexDirectory, build_index


def make_index(image_rows, text_rows, ids=None, normalize=False) -> IndexDirectory:
    """Index from plain nested lists; ids default to p1..pN."""
    ids = ids or [f"p{i + 1}" for i in range(len(image_rows))]
    images = [(pid, np.asarray(row, dtype=np.float32)) for pid, row in zip(ids, image_rows)]
    texts = [(pid, np.asarray(row, dtype=np.float32)) for pid, row in zip(ids, text_rows)]
    return build_index(images, texts, normalize=normalize)


def make_query(query_id, image_vec=None, text_vec=None, gold=()) -> QueryRecord:
    channels = {}
    if image_vec is not None:
        channels["image-query"] = as_embedding(image_vec)
    if text_vec is not None:
        channels["text-query"] = as_embedding(text_vec)
    return QueryRecord(query_id=query_id, text="", channel_embs=channels, gold_page_ids=frozenset(gold))


def unified_query(query_id, vec, gold=()) -> QueryRecord:
    return make_query(query_id, image_vec=vec, text_vec=vec, gold=gold)


def random_index(rng, pages, dim) -> IndexDirectory:
    return make_index(
        rng.standard_normal((pages, dim)).tolist(),
        rng.standard_normal((pages, dim)).tolist(),
    )


def write_jsonl(path, objects):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objects:
            fh.write(json.dumps(obj) + "\n")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(42)
