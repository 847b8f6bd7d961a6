"""Shared plumbing: seeded RNG substreams, worker pools, delimited output."""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

THREADS_ENV = "RCGNN_THREADS"


def substream(seed: int, *tags) -> np.random.Generator:
    """Derive an independent RNG stream from a root seed and a tag path.

    All randomness in the package flows from one top-level seed expanded
    through (seed, tag, tag, ...) counters, so identical seeds reproduce
    identical runs regardless of call order elsewhere.
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for tag in tags:
        if isinstance(tag, (int, np.integer)):
            entropy.append(int(tag) & 0xFFFFFFFF)
        else:
            entropy.append(zlib.crc32(str(tag).encode("utf-8")))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def worker_count() -> int:
    """Worker cap from RCGNN_THREADS; defaults to 1 for determinism."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map, fanned out over threads when RCGNN_THREADS > 1."""
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def fmt(value) -> str:
    """Deterministic cell formatting for delimited output."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    return str(value)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header_comment:
            fh.write("# " + header_comment + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Read a delimited file written by write_csv, skipping comment lines."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no records")
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]
