"""Independent oracles shared by the test modules.

Everything here deliberately avoids the library's own fast paths:
schoolbook polynomial arithmetic instead of lookup tables, Laplace
minor expansion instead of elimination, a from-scratch fixpoint decoder
instead of incremental echelon systems, and an absorbing Markov chain
instead of the Poissonized integral.
"""

from __future__ import annotations

import itertools

import numpy as np

from annexcode.codec import CodedPacket, DecoderState


def schoolbook_mul(a: int, b: int, poly: int, m: int) -> int:
    """Carry-less polynomial product reduced mod poly, bit by bit."""
    prod = 0
    for i in range(m):
        if (b >> i) & 1:
            prod ^= a << i
    for bit in range(2 * m - 2, m - 1, -1):
        if (prod >> bit) & 1:
            prod ^= poly << (bit - m)
    return prod


def laplace_det(field, mat) -> int:
    """Determinant by cofactor expansion along the first row."""
    mat = [list(map(int, row)) for row in mat]
    n = len(mat)
    if n == 1:
        return mat[0][0]
    det = 0
    for j in range(n):
        if mat[0][j] == 0:
            continue
        minor = [row[:j] + row[j + 1 :] for row in mat[1:]]
        det ^= field.mul(mat[0][j], laplace_det(field, minor))  # char 2: +/- fold
    return det


def minor_rank(field, mat) -> int:
    """Rank as the largest r with some nonzero r x r minor."""
    mat = np.asarray(mat)
    rows, cols = mat.shape
    for r in range(min(rows, cols), 0, -1):
        for ri in itertools.combinations(range(rows), r):
            for ci in itertools.combinations(range(cols), r):
                sub = mat[np.ix_(ri, ci)]
                if laplace_det(field, sub) != 0:
                    return r
    return 0


def closure_decode(layout, field, trace, upto: int):
    """Per-generation decodability closure computed from scratch.

    Repeatedly scans all generations; one decodes when its received rows,
    restricted to unresolved members (already-resolved values substituted
    into the right-hand side), reach full rank.  Returns the resolved
    map {packet: value} at the fixpoint.
    """
    p = layout.params
    resolved: dict[int, np.ndarray] = {}
    decoded: set[int] = set()
    changed = True
    while changed:
        changed = False
        for i in range(p.n):
            if i in decoded:
                continue
            members = layout.members[i]
            unres = [t for t, pk in enumerate(members) if pk not in resolved]
            if not unres:
                decoded.add(i)
                changed = True
                continue
            rows, rhs = [], []
            for cp in trace[:upto]:
                if cp.gen_index != i:
                    continue
                vec = np.array(cp.coding_vector, dtype=np.int64)
                pay = np.array(cp.payload, dtype=np.int64)
                for t, pk in enumerate(members):
                    if pk in resolved and vec[t]:
                        pay = pay ^ field.mul_vec(int(vec[t]), resolved[pk])
                rows.append([int(vec[t]) for t in unres])
                rhs.append(pay)
            if not rows:
                continue
            mat = np.array(rows, dtype=np.int64)
            if field.rank(mat) != len(unres):
                continue
            aug = np.concatenate([mat, np.array(rhs, dtype=np.int64)], axis=1)
            red, piv = field._eliminate(aug)
            for ri, pc in enumerate(piv):
                resolved[members[unres[pc]]] = red[ri, len(unres):]
            decoded.add(i)
            changed = True
    return resolved, decoded


def replay(layout, field, trace, upto: int, cascade: bool = True) -> DecoderState:
    state = DecoderState(layout, field, cascade=cascade)
    for cp in trace[:upto]:
        state.ingest(cp)
    return state


def make_trace_packets(layout, field, src, count, rng) -> list[CodedPacket]:
    """Uniform-scheduling trace as CodedPacket objects (reference path)."""
    from annexcode.simulate import _TrialEngine

    eng = _TrialEngine(layout)
    gis, vecs, pays = eng.make_trace(count, src, rng)
    out = []
    for c in range(count):
        j = int(gis[c])
        size = len(layout.members[j])
        out.append(CodedPacket(j, vecs[c, :size].copy(), pays[c].copy()))
    return out


def markov_expected_draws(n: int, ks, ms) -> float:
    """Expected uniform draws over n bins until, for every level j, at
    least k_j bins hold at least m_j draws.  Exact dynamic program over
    capped count vectors (counts above m_1 are equivalent to m_1)."""
    cap = ms[0]
    ks = list(ks)
    ms = list(ms)

    def satisfied(counts) -> bool:
        return all(sum(c >= m for c in counts) >= k for k, m in zip(ks, ms))

    states = list(itertools.product(range(cap + 1), repeat=n))
    expect: dict[tuple, float] = {}
    # Process in order of decreasing total count: transitions only increase it.
    for st in sorted(states, key=lambda s: -sum(s)):
        if satisfied(st):
            expect[st] = 0.0
            continue
        acc = 1.0
        for i in range(n):
            nxt = list(st)
            nxt[i] = min(cap, nxt[i] + 1)
            nxt = tuple(nxt)
            if nxt != st:
                acc += expect[nxt] / n
            else:
                # Absorbed mass on a saturated bin: draws that change
                # nothing still count, handled via the geometric factor.
                pass
        saturated = sum(1 for i in range(n) if min(cap, st[i] + 1) == st[i])
        if saturated:
            acc = acc / (1.0 - saturated / n)
        expect[st] = acc
    return expect[tuple([0] * n)]


def harmonic(n: int) -> float:
    return sum(1.0 / i for i in range(1, n + 1))
