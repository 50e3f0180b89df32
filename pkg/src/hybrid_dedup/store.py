"""Physical block store model and the logical-to-physical mapping."""

from __future__ import annotations

import heapq
from typing import Iterator, Optional

LbaKey = tuple[int, int]  # (stream, lba)


class IntegrityError(RuntimeError):
    """Store and mapping disagree; ``problems`` lists the findings."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        head = "; ".join(problems[:5])
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        super().__init__(f"integrity check failed: {head}{more}")


class StoreFullError(RuntimeError):
    pass


class BlockStore:
    """Blocks addressed by PBA, each holding one fingerprint.

    ``table`` is the on-disk fingerprint multi-table (fingerprint -> PBAs).
    A block whose refcount reaches zero stays allocated (and counted as live)
    until :meth:`collect_garbage` returns it to the free heap.
    """

    def __init__(self, capacity: Optional[int] = None):
        self.capacity = capacity
        self.table: dict[bytes, set[int]] = {}
        self.content: dict[int, bytes] = {}
        self.refcount: dict[int, int] = {}
        self._free: list[int] = []
        self._next = 0
        self._zero: set[int] = set()
        self.peak = 0
        self.allocations = 0

    @property
    def live(self) -> int:
        """Allocated blocks, including unreferenced ones awaiting collection."""
        return len(self.content)

    @property
    def referenced(self) -> int:
        return len(self.content) - len(self._zero)

    @property
    def free_count(self) -> int:
        return len(self._free)

    def allocate(self, fp: bytes) -> int:
        if self._free:
            pba = heapq.heappop(self._free)
        else:
            if self.capacity is not None and self._next >= self.capacity:
                raise StoreFullError(f"block store full at {self.capacity} blocks")
            pba = self._next
            self._next += 1
        self.content[pba] = fp
        self.refcount[pba] = 0
        self._zero.add(pba)
        pbas = self.table.get(fp)
        if pbas is None:
            self.table[fp] = {pba}
        else:
            pbas.add(pba)
        self.allocations += 1
        if len(self.content) > self.peak:
            self.peak = len(self.content)
        return pba

    def fingerprint_of(self, pba: int) -> Optional[bytes]:
        return self.content.get(pba)

    def pbas_for(self, fp: bytes) -> set[int]:
        return self.table.get(fp, set())

    def has_fingerprint(self, fp: bytes) -> bool:
        return fp in self.table

    def incref(self, pba: int, n: int = 1) -> None:
        c = self.refcount[pba]
        if c == 0:
            self._zero.discard(pba)
        self.refcount[pba] = c + n

    def decref(self, pba: int, n: int = 1) -> None:
        c = self.refcount[pba] - n
        if c < 0:
            raise IntegrityError([f"refcount of PBA {pba} would go negative"])
        self.refcount[pba] = c
        if c == 0:
            self._zero.add(pba)

    def unreferenced(self) -> set[int]:
        return set(self._zero)

    def release(self, pba: int) -> None:
        """Return an unreferenced block to the free heap."""
        if self.refcount[pba]:
            raise IntegrityError([f"PBA {pba} released with refcount {self.refcount[pba]}"])
        fp = self.content.pop(pba)
        del self.refcount[pba]
        self._zero.discard(pba)
        pbas = self.table[fp]
        pbas.discard(pba)
        if not pbas:
            del self.table[fp]
        heapq.heappush(self._free, pba)

    def collect_garbage(self) -> int:
        zero = sorted(self._zero)
        for pba in zero:
            self.release(pba)
        return len(zero)

    def duplicate_fingerprints(self) -> Iterator[tuple[bytes, set[int]]]:
        for fp, pbas in self.table.items():
            if len(pbas) > 1:
                yield fp, pbas


class LbaMapping:
    """(stream, LBA) -> PBA, with a reverse index and refcount upkeep."""

    def __init__(self, store: BlockStore):
        self.store = store
        self.forward: dict[LbaKey, int] = {}
        self.reverse: dict[int, set[LbaKey]] = {}
        self.durable = True

    def __len__(self) -> int:
        return len(self.forward)

    def get(self, key: LbaKey) -> Optional[int]:
        return self.forward.get(key)

    def map(self, key: LbaKey, pba: int) -> Optional[int]:
        """Point ``key`` at ``pba``; returns the previous PBA (or None)."""
        old = self.forward.get(key)
        if old == pba:
            return old
        self.store.incref(pba)
        self.forward[key] = pba
        rev = self.reverse.get(pba)
        if rev is None:
            self.reverse[pba] = {key}
        else:
            rev.add(key)
        if old is not None:
            keys = self.reverse[old]
            keys.discard(key)
            if not keys:
                del self.reverse[old]
            self.store.decref(old)
        return old

    def keys_for(self, pba: int) -> set[LbaKey]:
        return self.reverse.get(pba, set())

    def move_all(self, src: int, dst: int) -> int:
        """Remap every key on ``src`` to ``dst``; returns how many moved."""
        keys = self.reverse.pop(src, None)
        if not keys:
            return 0
        for key in keys:
            self.forward[key] = dst
        self.reverse.setdefault(dst, set()).update(keys)
        n = len(keys)
        self.store.decref(src, n)
        self.store.incref(dst, n)
        return n


def check_integrity(store: BlockStore, mapping: LbaMapping) -> list[str]:
    """Full sweep; returns a list of problems (empty when consistent)."""
    problems = []
    counts: dict[int, int] = {}
    for key, pba in mapping.forward.items():
        if pba not in store.content:
            problems.append(f"{key} maps to unallocated PBA {pba}")
            continue
        counts[pba] = counts.get(pba, 0) + 1
        if key not in mapping.reverse.get(pba, ()):
            problems.append(f"{key} missing from reverse index of PBA {pba}")
    for pba, rc in store.refcount.items():
        if counts.get(pba, 0) != rc:
            problems.append(f"PBA {pba} refcount {rc} but {counts.get(pba, 0)} mappings")
    for fp, pbas in store.table.items():
        for pba in pbas:
            if store.content.get(pba) != fp:
                problems.append(f"table lists PBA {pba} under the wrong fingerprint")
    listed = sum(len(p) for p in store.table.values())
    if listed != len(store.content):
        problems.append(f"table lists {listed} PBAs but {len(store.content)} are allocated")
    freed = set(store._free)
    if freed & store.content.keys():
        problems.append("free heap overlaps allocated PBAs")
    return problems


def require_integrity(store: BlockStore, mapping: LbaMapping) -> None:
    problems = check_integrity(store, mapping)
    if problems:
        raise IntegrityError(problems)
