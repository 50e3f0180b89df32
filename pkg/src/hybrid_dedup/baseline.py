"""Stand-alone iDedup-style inline deduplicator used as a differential reference.

Deliberately shares no code with the main engine: one global LRU fingerprint
cache, one fixed minimum run length, no estimation and no post-processing.
It emits the same event tuples as ``InlineEngine`` with ``event_log`` on.
"""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterable

from .trace import TraceRecord

RUN_CAP = 64


class IDedupBaseline:
    def __init__(self, cache_entries: int, threshold: int = 4):
        if cache_entries < 1 or threshold < 1:
            raise ValueError("cache_entries and threshold must be >= 1")
        self.cache_entries = cache_entries
        self.threshold = threshold
        self.lru: OrderedDict = OrderedDict()  # fp -> pba
        self.lba_map: dict = {}
        self.content: dict = {}
        self.fps_on_disk: set = set()
        self.next_pba = 0
        self.runs: dict = {}  # stream -> list of (lba, fp, pba)
        self.events: list = []
        self.inline_deduped = 0
        self.written_new = 0
        self.hits = 0
        self.admitted = 0

    def _new_block(self, stream, lba, fp):
        pba = self.next_pba
        self.next_pba += 1
        self.content[pba] = fp
        self.fps_on_disk.add(fp)
        self.lba_map[(stream, lba)] = pba
        return pba

    def _flush(self, stream):
        run = self.runs.pop(stream, None)
        if not run:
            return
        first = run[0][0]
        if len(run) >= self.threshold:
            for lba, _fp, pba in run:
                self.lba_map[(stream, lba)] = pba
            self.inline_deduped += len(run)
            self.events.append(("dedup", stream, first, tuple(p for _, _, p in run)))
        else:
            pbas = tuple(self._new_block(stream, lba, fp) for lba, fp, _ in run)
            self.events.append(("mat", stream, first, pbas))

    def _breaks_run(self, stream, lba):
        run = self.runs.get(stream)
        return bool(run) and lba != run[-1][0] + 1

    def write(self, stream, lba, fp):
        if self._breaks_run(stream, lba):
            self._flush(stream)
        old = self.lba_map.get((stream, lba))
        if old is not None and self.content[old] == fp:
            self._flush(stream)
            self.inline_deduped += 1
            self.events.append(("skip", stream, lba, old))
            return
        pba = self.lru.get(fp)
        if pba is not None:
            self.hits += 1
            self.lru.move_to_end(fp)
            run = self.runs.setdefault(stream, [])
            run.append((lba, fp, pba))
            self.events.append(("buf", stream, lba, pba))
            if len(run) >= RUN_CAP:
                self._flush(stream)
            return
        self._flush(stream)
        pba = self._new_block(stream, lba, fp)
        self.written_new += 1
        if len(self.lru) >= self.cache_entries:
            self.lru.popitem(last=False)
        self.lru[fp] = pba
        self.admitted += 1
        self.events.append(("new", stream, lba, pba))

    def read(self, stream, lba):
        if self._breaks_run(stream, lba):
            self._flush(stream)
        self.events.append(("read", stream, lba, self.lba_map.get((stream, lba))))

    def replay(self, records: Iterable[TraceRecord]) -> "IDedupBaseline":
        for rec in records:
            if rec.is_write:
                self.write(rec.stream, rec.lba, rec.fingerprint)
            else:
                self.read(rec.stream, rec.lba)
        for stream in sorted(self.runs):
            self._flush(stream)
        return self
