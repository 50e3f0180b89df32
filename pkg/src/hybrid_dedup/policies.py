"""Replacement policies that order keys but leave storage to the caller.

A policy tracks membership and replacement order only.  The owning cache
decides *when* to evict (it calls :meth:`victim`) and stores the values.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Hashable, Optional


class LRUPolicy:
    name = "lru"

    def __init__(self, capacity: int = 0):
        self._order: OrderedDict = OrderedDict()

    def __len__(self) -> int:
        return len(self._order)

    def __contains__(self, key) -> bool:
        return key in self._order

    def insert(self, key: Hashable) -> None:
        self._order[key] = None

    def touch(self, key: Hashable) -> None:
        self._order.move_to_end(key)

    def remove(self, key: Hashable) -> None:
        del self._order[key]

    def victim(self, incoming: Optional[Hashable] = None) -> Hashable:
        key, _ = self._order.popitem(last=False)
        return key

    def keys(self):
        return list(self._order)


class LFUPolicy:
    """Least frequently used; ties go to the least recently used."""

    name = "lfu"

    def __init__(self, capacity: int = 0):
        self._freq: dict = {}
        self._buckets: dict[int, OrderedDict] = {}
        self._min = 0

    def __len__(self) -> int:
        return len(self._freq)

    def __contains__(self, key) -> bool:
        return key in self._freq

    def _push(self, key, f: int) -> None:
        bucket = self._buckets.get(f)
        if bucket is None:
            bucket = self._buckets[f] = OrderedDict()
        bucket[key] = None
        self._freq[key] = f

    def _pull(self, key) -> int:
        f = self._freq.pop(key)
        bucket = self._buckets[f]
        del bucket[key]
        if not bucket:
            del self._buckets[f]
        return f

    def insert(self, key: Hashable) -> None:
        self._push(key, 1)
        self._min = 1

    def touch(self, key: Hashable) -> None:
        f = self._pull(key)
        self._push(key, f + 1)
        if f == self._min and f not in self._buckets:
            self._min = f + 1

    def remove(self, key: Hashable) -> None:
        f = self._pull(key)
        if f == self._min and f not in self._buckets:
            self._min = min(self._buckets, default=0)

    def victim(self, incoming: Optional[Hashable] = None) -> Hashable:
        if self._min not in self._buckets:
            self._min = min(self._buckets)
        bucket = self._buckets[self._min]
        key, _ = bucket.popitem(last=False)
        del self._freq[key]
        if not bucket:
            del self._buckets[self._min]
            self._min = min(self._buckets, default=0)
        return key

    def frequency(self, key) -> int:
        return self._freq[key]


class ARCPolicy:
    """Adaptive Replacement Cache ordering (Megiddo & Modha).

    ``capacity`` is the target size ``c`` used for adaptation and ghost-list
    bounds.  Resident keys live in ``t1`` (seen once) and ``t2`` (seen again);
    ``b1``/``b2`` remember recently evicted keys.
    """

    name = "arc"

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("ARC capacity must be >= 1")
        self.c = capacity
        self.p = 0.0
        self.t1: OrderedDict = OrderedDict()
        self.t2: OrderedDict = OrderedDict()
        self.b1: OrderedDict = OrderedDict()
        self.b2: OrderedDict = OrderedDict()
        self._adapted = None
        self._prepared = None

    def __len__(self) -> int:
        return len(self.t1) + len(self.t2)

    def __contains__(self, key) -> bool:
        return key in self.t1 or key in self.t2

    def touch(self, key: Hashable) -> None:
        if key in self.t1:
            del self.t1[key]
        else:
            del self.t2[key]
        self.t2[key] = None

    def remove(self, key: Hashable) -> None:
        if key in self.t1:
            del self.t1[key]
        else:
            del self.t2[key]

    def _adapt(self, key) -> None:
        if self._adapted == key:
            return
        if key in self.b1:
            delta = 1.0 if len(self.b1) >= len(self.b2) else len(self.b2) / len(self.b1)
            self.p = min(self.p + delta, float(self.c))
        elif key in self.b2:
            delta = 1.0 if len(self.b2) >= len(self.b1) else len(self.b1) / len(self.b2)
            self.p = max(self.p - delta, 0.0)
        self._adapted = key

    def _replace(self, key) -> Hashable:
        t1_len = len(self.t1)
        if self.t1 and (t1_len > self.p or (key in self.b2 and t1_len == self.p)) or not self.t2:
            old, _ = self.t1.popitem(last=False)
            self.b1[old] = None
        else:
            old, _ = self.t2.popitem(last=False)
            self.b2[old] = None
        return old

    def _trim_ghosts(self, key) -> bool:
        """Ghost-list upkeep for a brand-new key.  True means drop T1's LRU outright."""
        if self._prepared == key:
            return False
        self._prepared = key
        l1 = len(self.t1) + len(self.b1)
        if l1 >= self.c:
            if len(self.t1) < self.c:
                if self.b1:
                    self.b1.popitem(last=False)
                return False
            return True
        total = l1 + len(self.t2) + len(self.b2)
        if total >= 2 * self.c and self.b2:
            self.b2.popitem(last=False)
        return False

    def victim(self, incoming: Optional[Hashable] = None) -> Hashable:
        if incoming is not None and (incoming in self.b1 or incoming in self.b2):
            self._adapt(incoming)
            return self._replace(incoming)
        if incoming is not None and self._trim_ghosts(incoming):
            old, _ = self.t1.popitem(last=False)
            return old
        return self._replace(incoming)

    def insert(self, key: Hashable) -> None:
        if key in self.b1 or key in self.b2:
            self._adapt(key)
            self.b1.pop(key, None)
            self.b2.pop(key, None)
            self.t2[key] = None
        else:
            self._trim_ghosts(key)
            self.t1[key] = None
        self._adapted = self._prepared = None

    def keys(self):
        return list(self.t1) + list(self.t2)


POLICIES = {"lru": LRUPolicy, "lfu": LFUPolicy, "arc": ARCPolicy}


def make_policy(name: str, capacity: int):
    try:
        return POLICIES[name.lower()](capacity)
    except KeyError:
        raise ValueError(f"unknown replacement policy {name!r}") from None
