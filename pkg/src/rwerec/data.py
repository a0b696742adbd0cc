"""Interaction file readers and writers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .graph import FeedbackGraph

FORMATS = ("movielens-dat", "tsv-edges")


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class InteractionRecord:
    user_id: str
    item_id: str
    weight: int = 1


def iter_dataset(path, fmt: str) -> Iterator[InteractionRecord]:
    """Stream records from ``path``; every rating counts as an implicit positive."""
    if fmt not in FORMATS:
        raise DataError(f"unknown dataset format {fmt!r}; expected one of {', '.join(FORMATS)}")
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            if fmt == "movielens-dat":
                parts = line.split("::")
                if len(parts) != 4:
                    raise DataError(f"{path}:{lineno}: expected uid::iid::rating::ts")
                yield _record(parts[0], parts[1], "1", path, lineno)
            else:
                parts = line.split("\t")
                if len(parts) not in (2, 3):
                    raise DataError(f"{path}:{lineno}: expected user<TAB>item[<TAB>count]")
                yield _record(parts[0], parts[1], parts[2] if len(parts) == 3 else "1", path, lineno)


def _record(user: str, item: str, weight: str, path, lineno: int) -> InteractionRecord:
    user, item = user.strip(), item.strip()
    if not user or not item:
        raise DataError(f"{path}:{lineno}: empty user or item id")
    try:
        w = int(weight)
    except ValueError:
        raise DataError(f"{path}:{lineno}: count {weight!r} is not an integer") from None
    return InteractionRecord(user, item, w)


def parse_dataset(path, fmt: str) -> list[InteractionRecord]:
    return list(iter_dataset(path, fmt))


def write_edges_tsv(path, graph: FeedbackGraph, edges: np.ndarray | None = None) -> None:
    """``user_id<TAB>item_id`` per edge, external ids, row-major order."""
    edges = graph.edges() if edges is None else np.asarray(edges).reshape(-1, 2)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, j in edges.tolist():
            fh.write(f"{graph.user_ids[u]}\t{graph.item_ids[j]}\n")
