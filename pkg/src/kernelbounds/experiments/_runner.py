"""Deterministic parallel map and config helpers shared by the studies."""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor

from ..errors import BoundError, InvalidInput


def parallel_map(fn, items, threads: int = 1) -> list:
    """``[fn(i) for i in items]``; order-preserving, so results never depend on scheduling."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def guarded(fn, item):
    """Run ``fn(item)``; a :class:`BoundError` is returned instead of raised."""
    try:
        return fn(item)
    except BoundError as exc:
        return exc


def dataclass_from_dict(cls, d: dict, tuples=()):
    """Build a frozen config dataclass, rejecting unknown keys."""
    if not isinstance(d, dict):
        raise InvalidInput(f"{cls.__name__} expects an object", got=type(d).__name__)
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(d) - names
    if extra:
        raise InvalidInput(f"unknown {cls.__name__} keys", keys=sorted(extra))
    kw = {k: (tuple(v) if k in tuples else v) for k, v in d.items()}
    return cls(**kw)


def dataclass_to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out
