"""Allocation table for the engine.

Pointers are ``(alloc_id | None, byte_offset)``; NULL is ``(None, 0)``.
Each allocation keeps its bytes in a bytearray plus an init mask, so that
reads of never-written bytes can be told apart from zeros.
"""
from __future__ import annotations

from ..minic import ast as A

NULL = (None, 0)
LIVE, FREED, DEAD = 0, 1, 2


class Allocation:
    __slots__ = ("size", "data", "init", "dynamic", "state", "label", "size_symbol")

    def __init__(self, size, dynamic, label="", zero=False, size_symbol=None):
        self.size = size
        self.data = bytearray(size)
        self.init = bytearray(b"\x01" * size) if zero else bytearray(size)
        self.dynamic = dynamic
        self.state = LIVE
        self.label = label
        self.size_symbol = size_symbol


class Memory:
    def __init__(self):
        self.allocs: list = []

    def alloc(self, size, dynamic, label="", zero=False, size_symbol=None) -> int:
        self.allocs.append(Allocation(size, dynamic, label, zero, size_symbol))
        return len(self.allocs) - 1

    def __getitem__(self, aid) -> Allocation:
        return self.allocs[aid]

    def kill(self, aid) -> None:
        self.allocs[aid].state = DEAD

    def uninitialized(self, aid, off, width) -> bool:
        return not any(self.allocs[aid].init[off:off + width])

    def load(self, aid, off, ty: A.Ty) -> int:
        """Little-endian load; never-written bytes read as zero."""
        a = self.allocs[aid]
        raw = bytes(b if m else 0 for b, m in zip(a.data[off:off + ty.width], a.init[off:off + ty.width]))
        return A.wrap(int.from_bytes(raw, "little"), ty)

    def store(self, aid, off, ty: A.Ty, value: int) -> None:
        a = self.allocs[aid]
        w = ty.width
        a.data[off:off + w] = (value % (1 << (8 * w))).to_bytes(w, "little")
        a.init[off:off + w] = b"\x01" * w

    def havoc(self, aid, off) -> None:
        a = self.allocs[aid]
        a.init[off:] = bytes(a.size - off)

    def copy(self, dst, doff, src, soff, n) -> None:
        s, d = self.allocs[src], self.allocs[dst]
        data, init = bytes(s.data[soff:soff + n]), bytes(s.init[soff:soff + n])
        d.data[doff:doff + n] = data
        d.init[doff:doff + n] = init

    def fill(self, aid, off, n, byte) -> None:
        a = self.allocs[aid]
        a.data[off:off + n] = bytes([byte]) * n
        a.init[off:off + n] = b"\x01" * n

    def readable(self, p, n) -> bool:
        aid, off = p
        if aid is None:
            return False
        a = self.allocs[aid]
        return a.state == LIVE and 0 <= off and off + n <= a.size
