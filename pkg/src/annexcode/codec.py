"""Encoding and progressive decoding over overlapping generations.

The decoder keeps one reduced augmented system per generation (stored
rows in reduced row echelon form over the generation's still-unresolved
members).  Whenever a generation's independent rows match its number of
unresolved members it is solved, the solved packets are substituted into
every other generation holding them, and newly solvable generations are
processed breadth-first until the queue drains (the cascade).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .gfield import GF, get_field
from .layout import GenerationLayout


@dataclass(frozen=True)
class CodedPacket:
    """One transmission: generation index, coding vector over that
    generation's member slots, and the combined payload."""

    gen_index: int
    coding_vector: np.ndarray
    payload: np.ndarray


@dataclass(frozen=True)
class DecodeReport:
    innovative: bool
    newly_decoded: int
    complete: bool


def encode(
    layout: GenerationLayout,
    field: GF,
    packets: np.ndarray,
    j: int,
    rng: np.random.Generator,
) -> CodedPacket:
    """Combine generation j's packets with i.i.d. uniform coefficients.

    `packets` is the (N, d) matrix of source packets.  Zero coefficients
    are allowed, so a fully zero (non-innovative) coded packet is legal.
    """
    members = layout.members[j]
    e = rng.integers(0, field.q, size=len(members), dtype=np.int64)
    payload = np.zeros(packets.shape[1], dtype=np.int64)
    for c, p in zip(e, members):
        if c:
            payload ^= field.mul_vec(int(c), packets[p])
    return CodedPacket(j, e, payload)


class DecoderState:
    """Per-generation echelon systems with cross-generation cascade.

    With cascade=False, solving is only attempted for the generation that
    received the packet; substitutions still propagate, but other
    generations that become solvable wait for their own next packet.
    """

    def __init__(self, layout: GenerationLayout, field: GF | None = None,
                 cascade: bool = True) -> None:
        self.layout = layout
        self.field = field if field is not None else get_field(layout.params.q)
        self.cascade = cascade
        p = layout.params
        self.d = p.d
        n = p.n
        self._sizes = [len(g) for g in layout.members]
        self._slot_of = [
            {pk: t for t, pk in enumerate(gen)} for gen in layout.members
        ]
        self._rows: list[list[np.ndarray]] = [[] for _ in range(n)]
        self._pivot_row: list[dict[int, int]] = [{} for _ in range(n)]
        self._resolved_val = np.zeros((p.N, p.d), dtype=np.int64)
        self._resolved = np.zeros(p.N, dtype=bool)
        self._unresolved = list(self._sizes)
        self._decoded = [False] * n
        self.received_count = [0] * n
        self.decoded_order: list[int] = []
        self.telemetry = {"row_ops": 0, "max_system_dim": 0}

    # ------------------------------------------------------------------
    def ingest(self, cp: CodedPacket) -> DecodeReport:
        p = self.layout.params
        j = cp.gen_index
        if not 0 <= j < p.n:
            raise ValueError(f"generation index {j} out of range")
        vec = np.asarray(cp.coding_vector, dtype=np.int64)
        if vec.shape != (self._sizes[j],):
            raise ValueError(
                f"coding vector length {vec.shape} does not match generation size"
            )
        payload = np.asarray(cp.payload, dtype=np.int64)
        if payload.shape != (self.d,):
            raise ValueError("payload length does not match d")
        self.received_count[j] += 1
        decoded_before = len(self.decoded_order)

        row = np.concatenate([vec, payload])
        self._substitute_resolved(j, row)
        innovative = False
        if not self._decoded[j]:
            innovative = self._insert_row(j, row)
            if innovative:
                queue: deque[int] = deque()
                if self._try_solve(j, queue):
                    self._drain(queue)
        return DecodeReport(
            innovative=innovative,
            newly_decoded=len(self.decoded_order) - decoded_before,
            complete=self.is_complete(),
        )

    def is_complete(self) -> bool:
        return bool(self._resolved.all())

    def recover(self) -> np.ndarray:
        """All N source packets; an error until decoding is complete."""
        if not self.is_complete():
            raise RuntimeError("decoding is not complete; packets still unresolved")
        return self._resolved_val.copy()

    @property
    def resolved_mask(self) -> np.ndarray:
        return self._resolved.copy()

    def stored_rows(self, i: int) -> int:
        return len(self._rows[i])

    # ------------------------------------------------------------------
    def _substitute_resolved(self, j: int, row: np.ndarray) -> None:
        """Eliminate already-resolved members of j from an incoming row."""
        gf = self.field
        members = self.layout.members[j]
        for t in range(self._sizes[j]):
            c = int(row[t])
            if c and self._resolved[members[t]]:
                row[self._sizes[j]:] ^= gf.mul_vec(c, self._resolved_val[members[t]])
                row[t] = 0
                self.telemetry["row_ops"] += 1

    def _insert_row(self, j: int, row: np.ndarray) -> bool:
        """Reduce a row against generation j's system; store if innovative."""
        gf = self.field
        size = self._sizes[j]
        pivots = self._pivot_row[j]
        rows = self._rows[j]
        # Zero the row at every existing pivot column (not just up to the
        # first free slot), so stored rows stay fully reduced and a solved
        # system can be read off pivot by pivot.
        pivot = -1
        for t in range(size):
            c = int(row[t])
            if not c:
                continue
            r = pivots.get(t)
            if r is not None:
                row[t:] ^= gf.mul_vec(c, rows[r][t:])
                self.telemetry["row_ops"] += 1
            elif pivot < 0:
                pivot = t
        if pivot < 0:
            return False
        inv = gf.inv(int(row[pivot]))
        row[pivot:] = gf.mul_vec(inv, row[pivot:])
        for r, other in enumerate(rows):
            c = int(other[pivot])
            if c:
                other[pivot:] ^= gf.mul_vec(c, row[pivot:])
                self.telemetry["row_ops"] += 1
        pivots[pivot] = len(rows)
        rows.append(row)
        return True

    def _try_solve(self, i: int, queue: deque[int]) -> bool:
        """Solve generation i if its rank covers all unresolved members."""
        if self._decoded[i] or self._unresolved[i] == 0:
            return False
        if len(self._rows[i]) != self._unresolved[i]:
            return False
        self.telemetry["max_system_dim"] = max(
            self.telemetry["max_system_dim"], self._unresolved[i]
        )
        members = self.layout.members[i]
        size = self._sizes[i]
        for slot, r in self._pivot_row[i].items():
            row = self._rows[i][r]
            pk = members[slot]
            if self._resolved[pk]:
                # Already resolved elsewhere but still queued for
                # substitution here; the solved value must agree and the
                # packet must not re-enter the cascade queue.
                assert np.array_equal(self._resolved_val[pk], row[size:])
                continue
            self._resolved_val[pk] = row[size:]
            self._resolved[pk] = True
            queue.append(pk)
        self._mark_decoded(i)
        return True

    def _mark_decoded(self, i: int) -> None:
        self._decoded[i] = True
        self._rows[i] = []
        self._pivot_row[i] = {}
        self._unresolved[i] = 0
        self.decoded_order.append(i)

    def _drain(self, queue: deque[int]) -> None:
        """Substitute resolved packets everywhere; cascade solves if enabled."""
        gf = self.field
        while queue:
            pk = queue.popleft()
            for i in self.layout.reverse[pk]:
                if self._decoded[i]:
                    continue
                slot = self._slot_of[i][pk]
                self._unresolved[i] -= 1
                size = self._sizes[i]
                r0 = self._pivot_row[i].pop(slot, None)
                if r0 is not None:
                    # Pivot row loses its pivot: detach, substitute, reinsert.
                    row = self._rows[i][r0]
                    last = len(self._rows[i]) - 1
                    if r0 != last:
                        moved = self._rows[i][last]
                        self._rows[i][r0] = moved
                        moved_pivot = next(
                            s for s, rr in self._pivot_row[i].items() if rr == last
                        )
                        self._pivot_row[i][moved_pivot] = r0
                    self._rows[i].pop()
                    row[size:] ^= gf.mul_vec(1, self._resolved_val[pk])
                    row[slot] = 0
                    self._insert_row(i, row)
                else:
                    for row in self._rows[i]:
                        c = int(row[slot])
                        if c:
                            row[size:] ^= gf.mul_vec(c, self._resolved_val[pk])
                            row[slot] = 0
                            self.telemetry["row_ops"] += 1
                if self._unresolved[i] == 0:
                    # All members resolved elsewhere; no residual rows can remain.
                    assert not self._rows[i]
                    self._mark_decoded(i)
                elif self.cascade:
                    self._try_solve(i, queue)


# ----------------------------------------------------------------------
# Trace files: one JSON record per line for replay and debugging.
# ----------------------------------------------------------------------

def _symbol_hex(values: np.ndarray, q: int) -> str:
    width = -(-(q - 1).bit_length() // 4)
    return "".join(format(int(v), f"0{width}x") for v in values)


def _symbol_unhex(text: str, q: int) -> np.ndarray:
    width = -(-(q - 1).bit_length() // 4)
    vals = [int(text[i : i + width], 16) for i in range(0, len(text), width)]
    return np.array(vals, dtype=np.int64)


def write_trace(path, coded_packets, q: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cp in coded_packets:
            fh.write(
                json.dumps(
                    {
                        "gen_index": int(cp.gen_index),
                        "coding_vector": _symbol_hex(cp.coding_vector, q),
                        "payload": _symbol_hex(cp.payload, q),
                    }
                )
                + "\n"
            )


def read_trace(path, q: int) -> list[CodedPacket]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                CodedPacket(
                    int(obj["gen_index"]),
                    _symbol_unhex(obj["coding_vector"], q),
                    _symbol_unhex(obj["payload"], q),
                )
            )
    return out
