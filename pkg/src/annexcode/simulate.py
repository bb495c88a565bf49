"""Monte Carlo collection trials with exact finite-field decoding.

A trial draws a generation uniformly at random for every transmission,
encodes with fresh i.i.d. uniform coefficients, and feeds the receiver
until all packets are recovered.  The receiver semantics are identical
to codec.DecoderState (incremental per-generation echelon systems with
cascade resolution); the hot loop lives in a numba kernel operating on
flat arrays so that ensemble sweeps stay fast.  Equivalence of the two
paths on shared traces is asserted in the test suite.

Random annex trials rebuild a fresh layout per trial, since ensemble
statistics average over the annex randomness; deterministic layouts
(head-to-toe, disjoint) are fixed across trials.  All randomness derives
from one master seed through numpy SeedSequence spawning, so runs are
reproducible and trials are independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco

from .gfield import get_field
from .layout import CodeParams, GenerationLayout, build_layout, sample_annexes


@dataclass(frozen=True)
class TrialResult:
    """One trial: total packets to completion, the packet count at which
    each successive generation was decoded, and per-generation receive
    tallies."""

    packets_to_completion: int
    decoded_generations_timeline: tuple[int, ...]
    per_generation_received: tuple[int, ...]
    completed: bool


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class FailureCurve:
    """Fraction of trials still undecodable after each grid value of
    received packets."""

    grid: tuple[int, ...]
    p_fail: tuple[float, ...]
    trials: int
    seed: int


# ----------------------------------------------------------------------
# Decoder kernel
# ----------------------------------------------------------------------

@njit(cache=True)
def _insert_row(j, work, exp, log, gsize, gmax, d, rows, nrows, pivot_row, row_pivot):
    """Reduce `work` against generation j's reduced system; store if
    innovative.  Returns the new pivot slot, or -1 for a dependent row."""
    size = gsize[j]
    width = gmax + d
    # Zero the row at every existing pivot column (not just up to the
    # first free slot), keeping stored rows fully reduced.
    piv = -1
    for t in range(size):
        c = work[t]
        if c != 0:
            r = pivot_row[j, t]
            if r >= 0:
                lc = log[c]
                for k in range(t, size):
                    v = rows[j, r, k]
                    if v != 0:
                        work[k] ^= exp[lc + log[v]]
                for k in range(gmax, width):
                    v = rows[j, r, k]
                    if v != 0:
                        work[k] ^= exp[lc + log[v]]
            elif piv < 0:
                piv = t
    if piv < 0:
        return -1
    # normalize pivot to 1
    qm1 = exp.shape[0] // 2
    linv = (qm1 - log[work[piv]]) % qm1
    for k in range(piv, size):
        v = work[k]
        work[k] = 0 if v == 0 else exp[linv + log[v]]
    for k in range(gmax, width):
        v = work[k]
        work[k] = 0 if v == 0 else exp[linv + log[v]]
    # keep the system fully reduced: clear this slot in stored rows
    for r in range(nrows[j]):
        c = rows[j, r, piv]
        if c != 0:
            lc = log[c]
            for k in range(piv, size):
                v = work[k]
                if v != 0:
                    rows[j, r, k] ^= exp[lc + log[v]]
            for k in range(gmax, width):
                v = work[k]
                if v != 0:
                    rows[j, r, k] ^= exp[lc + log[v]]
    rnew = nrows[j]
    for k in range(width):
        rows[j, rnew, k] = work[k]
    pivot_row[j, piv] = rnew
    row_pivot[j, rnew] = piv
    nrows[j] += 1
    return piv


@njit(cache=True)
def _resolve_generation(
    i, count, members, gmax, d, rows, nrows, pivot_row, row_pivot,
    resolved, resval, unresolved, decoded, timeline, decoded_count,
    queue, qtail, gsize,
):
    """All unresolved members of a full-rank generation become known.

    A pivot slot may hold a packet that was already resolved elsewhere
    but is still queued for substitution here; its value is kept and it
    must not re-enter the queue.
    """
    for r in range(nrows[i]):
        slot = row_pivot[i, r]
        pk = members[i, slot]
        if resolved[pk] == 0:
            resolved[pk] = 1
            for dd in range(d):
                resval[pk, dd] = rows[i, r, gmax + dd]
            queue[qtail] = pk
            qtail += 1
    for t in range(gsize[i]):
        pivot_row[i, t] = -1
    nrows[i] = 0
    unresolved[i] = 0
    decoded[i] = 1
    timeline[decoded_count[0]] = count
    decoded_count[0] += 1
    return qtail


@njit(cache=True)
def _ingest_chunk(
    gis, vecs, pays, start_count,
    exp, log,
    members, gsize, gmax, d,
    rev_indptr, rev_gen, rev_slot,
    rows, nrows, pivot_row, row_pivot,
    resolved, resval, unresolved, received,
    decoded, timeline, decoded_count,
    queue, cascade,
):
    """Feed a chunk of coded packets; returns the 1-based global packet
    count at completion, or -1 if the chunk ends with decoding open."""
    n = gsize.shape[0]
    width = gmax + d
    work = np.empty(width, dtype=np.int64)
    dwork = np.empty(width, dtype=np.int64)
    for c in range(gis.shape[0]):
        j = gis[c]
        count = start_count + c + 1
        received[j] += 1
        for t in range(gmax):
            work[t] = vecs[c, t]
        for t in range(d):
            work[gmax + t] = pays[c, t]
        # substitute already-resolved members into the incoming row
        for t in range(gsize[j]):
            v = work[t]
            if v != 0:
                pk = members[j, t]
                if resolved[pk] != 0:
                    lv = log[v]
                    for dd in range(d):
                        pv = resval[pk, dd]
                        if pv != 0:
                            work[gmax + dd] ^= exp[lv + log[pv]]
                    work[t] = 0
        if decoded[j] == 0:
            _insert_row(j, work, exp, log, gsize, gmax, d,
                        rows, nrows, pivot_row, row_pivot)
            if unresolved[j] > 0 and nrows[j] == unresolved[j]:
                qtail = _resolve_generation(
                    j, count, members, gmax, d, rows, nrows, pivot_row,
                    row_pivot, resolved, resval, unresolved, decoded,
                    timeline, decoded_count, queue, 0, gsize,
                )
                # cascade: substitute resolved packets everywhere, solving
                # newly covered generations breadth-first
                qhead = 0
                while qhead < qtail:
                    pk = queue[qhead]
                    qhead += 1
                    for idx in range(rev_indptr[pk], rev_indptr[pk + 1]):
                        i = rev_gen[idx]
                        if decoded[i] != 0:
                            continue
                        slot = rev_slot[idx]
                        unresolved[i] -= 1
                        r0 = pivot_row[i, slot]
                        if r0 >= 0:
                            # pivot row loses its pivot: detach, substitute,
                            # reinsert (dropped if nothing remains)
                            pivot_row[i, slot] = -1
                            last = nrows[i] - 1
                            for t in range(width):
                                dwork[t] = rows[i, r0, t]
                            if r0 != last:
                                for t in range(width):
                                    rows[i, r0, t] = rows[i, last, t]
                                mp = row_pivot[i, last]
                                row_pivot[i, r0] = mp
                                pivot_row[i, mp] = r0
                            nrows[i] = last
                            for dd in range(d):
                                dwork[gmax + dd] ^= resval[pk, dd]
                            dwork[slot] = 0
                            _insert_row(i, dwork, exp, log, gsize, gmax, d,
                                        rows, nrows, pivot_row, row_pivot)
                        else:
                            for r in range(nrows[i]):
                                cc = rows[i, r, slot]
                                if cc != 0:
                                    lc = log[cc]
                                    for dd in range(d):
                                        pv = resval[pk, dd]
                                        if pv != 0:
                                            rows[i, r, gmax + dd] ^= exp[lc + log[pv]]
                                    rows[i, r, slot] = 0
                        if unresolved[i] == 0:
                            for t in range(gsize[i]):
                                pivot_row[i, t] = -1
                            nrows[i] = 0
                            decoded[i] = 1
                            timeline[decoded_count[0]] = count
                            decoded_count[0] += 1
                        elif cascade and nrows[i] == unresolved[i]:
                            qtail = _resolve_generation(
                                i, count, members, gmax, d, rows, nrows,
                                pivot_row, row_pivot, resolved, resval,
                                unresolved, decoded, timeline, decoded_count,
                                queue, qtail, gsize,
                            )
        if decoded_count[0] == n:
            return count
    return -1


@njit(cache=True)
def _full_rank_waits(u, q, exp, log, trials, seed):
    """Draws of i.i.d. uniform length-u vectors until rank u, per trial."""
    np.random.seed(seed)
    qm1 = q - 1
    out = np.empty(trials, dtype=np.int64)
    rows = np.zeros((u, u), dtype=np.int64)
    pivot_of = np.empty(u, dtype=np.int64)
    row = np.empty(u, dtype=np.int64)
    for t in range(trials):
        for i in range(u):
            pivot_of[i] = -1
        rank = 0
        draws = 0
        while rank < u:
            draws += 1
            for i in range(u):
                row[i] = np.random.randint(0, q)
            piv = -1
            for i in range(u):
                c = row[i]
                if c != 0:
                    r = pivot_of[i]
                    if r >= 0:
                        lc = log[c]
                        for k in range(i, u):
                            v = rows[r, k]
                            if v != 0:
                                row[k] ^= exp[lc + log[v]]
                    else:
                        piv = i
                        break
            if piv >= 0:
                linv = (qm1 - log[row[piv]]) % qm1
                for k in range(u):
                    v = row[k] if k >= piv else 0
                    rows[rank, k] = 0 if v == 0 else exp[linv + log[v]]
                pivot_of[piv] = rank
                rank += 1
        out[t] = draws
    return out


# ----------------------------------------------------------------------
# Trial driver
# ----------------------------------------------------------------------

class _TrialEngine:
    """Flat-array mirror of one layout, reused across a trial's chunks."""

    def __init__(self, layout: GenerationLayout):
        p = layout.params
        self.params = p
        self.field = get_field(p.q)
        self.n = p.n
        self.members = layout.members_array()
        self.gsize = layout.generation_sizes()
        self.gmax = int(self.members.shape[1])
        self.members_safe = np.where(self.members < 0, 0, self.members)
        indptr = np.zeros(p.N + 1, dtype=np.int64)
        for gen in layout.members:
            for pk in gen:
                indptr[pk + 1] += 1
        np.cumsum(indptr, out=indptr)
        fill = indptr[:-1].copy()
        rev_gen = np.empty(indptr[-1], dtype=np.int64)
        rev_slot = np.empty(indptr[-1], dtype=np.int64)
        for i, gen in enumerate(layout.members):
            for slot, pk in enumerate(gen):
                rev_gen[fill[pk]] = i
                rev_slot[fill[pk]] = slot
                fill[pk] += 1
        self.rev_indptr = indptr
        self.rev_gen = rev_gen
        self.rev_slot = rev_slot

    def make_trace(self, count: int, src: np.ndarray, rng: np.random.Generator):
        """Uniformly scheduled coded packets: generation picks, coding
        vectors (zero-padded past each generation's size), payloads."""
        p = self.params
        gis = rng.integers(0, self.n, size=count, dtype=np.int64)
        vecs = rng.integers(0, p.q, size=(count, self.gmax), dtype=np.int64)
        vecs *= np.arange(self.gmax)[None, :] < self.gsize[gis][:, None]
        exp, log = self.field.exp_table, self.field.log_table
        sv = src[self.members_safe[gis]]          # (count, gmax, d)
        vz = vecs[:, :, None]
        prod = np.where((vz != 0) & (sv != 0), exp[log[vz] + log[sv]], 0)
        pays = np.bitwise_xor.reduce(prod, axis=1)
        return gis, vecs, pays

    def run(self, rng: np.random.Generator, cap: int, cascade: bool = True):
        """One trial; returns (completion count or -1, state dict)."""
        p = self.params
        n, gmax, d = self.n, self.gmax, p.d
        rows = np.zeros((n, gmax, gmax + d), dtype=np.int64)
        nrows = np.zeros(n, dtype=np.int64)
        pivot_row = np.full((n, gmax), -1, dtype=np.int64)
        row_pivot = np.full((n, gmax), -1, dtype=np.int64)
        resolved = np.zeros(p.N, dtype=np.int64)
        resval = np.zeros((p.N, d), dtype=np.int64)
        unresolved = self.gsize.copy()
        received = np.zeros(n, dtype=np.int64)
        decoded = np.zeros(n, dtype=np.int64)
        timeline = np.zeros(n, dtype=np.int64)
        decoded_count = np.zeros(1, dtype=np.int64)
        queue = np.empty(p.N, dtype=np.int64)

        src = rng.integers(0, p.q, size=(p.N, d), dtype=np.int64)
        exp, log = self.field.exp_table, self.field.log_table
        completion = -1
        count = 0
        while count < cap:
            chunk = min(cap - count, 2 * p.N if count == 0 else p.N)
            gis, vecs, pays = self.make_trace(chunk, src, rng)
            res = _ingest_chunk(
                gis, vecs, pays, count, exp, log,
                self.members, self.gsize, gmax, d,
                self.rev_indptr, self.rev_gen, self.rev_slot,
                rows, nrows, pivot_row, row_pivot,
                resolved, resval, unresolved, received,
                decoded, timeline, decoded_count, queue, cascade,
            )
            if res >= 0:
                completion = int(res)
                break
            count += chunk
        state = {
            "timeline": timeline[: int(decoded_count[0])].copy(),
            "received": received,
            "resolved": resolved,
            "resval": resval,
            "src": src,
        }
        if completion >= 0 and not np.array_equal(resval, src):
            raise RuntimeError("decoded packets differ from the source")
        return completion, state


_SAFETY_CAP_FACTOR = 50


def run_trial(layout: GenerationLayout, seed, cap: int | None = None) -> TrialResult:
    """Random-scheduling collection over a fixed layout until complete.

    Packets are counted whether or not they are innovative.  Without an
    explicit cap, a trial that somehow fails to finish within 50*N
    packets raises instead of looping forever.
    """
    p = layout.params
    rng = np.random.default_rng(seed)
    engine = _TrialEngine(layout)
    hard_cap = cap if cap is not None else _SAFETY_CAP_FACTOR * p.N
    completion, state = engine.run(rng, hard_cap)
    if completion < 0 and cap is None:
        raise RuntimeError(
            f"trial did not complete within {hard_cap} packets "
            f"(N={p.N}, h={p.h}, l={p.l}, q={p.q}); "
            f"{int(state['resolved'].sum())} of {p.N} packets resolved"
        )
    return TrialResult(
        packets_to_completion=int(completion if completion >= 0 else hard_cap),
        decoded_generations_timeline=tuple(int(v) for v in state["timeline"]),
        per_generation_received=tuple(int(v) for v in state["received"]),
        completed=completion >= 0,
    )


def completion_counts(
    params: CodeParams,
    scheme: str,
    trials: int,
    seed,
    cap: int | None = None,
) -> np.ndarray:
    """Packets-to-completion for independent trials (-1 where a capped
    trial did not finish).  Random annex trials draw a fresh layout each;
    deterministic schemes share one."""
    if trials < 1:
        raise ValueError("trials must be positive")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(trials)
    hard_cap = cap if cap is not None else _SAFETY_CAP_FACTOR * params.N
    fixed_engine = None
    if scheme != "random-annex":
        fixed_engine = _TrialEngine(build_layout(params, scheme))
    out = np.empty(trials, dtype=np.int64)
    for t in range(trials):
        rng = np.random.default_rng(children[t])
        engine = fixed_engine
        if engine is None:
            engine = _TrialEngine(build_layout(params, "random-annex", rng))
        completion, _ = engine.run(rng, hard_cap)
        if completion < 0 and cap is None:
            raise RuntimeError(f"trial {t} did not complete within {hard_cap} packets")
        out[t] = completion
    return out


def mean_packets(params: CodeParams, scheme: str, trials: int, seed) -> MeanEstimate:
    """Monte Carlo mean of packets-to-completion with its standard error."""
    counts = completion_counts(params, scheme, trials, seed)
    return MeanEstimate(
        mean=float(counts.mean()),
        stderr=float(counts.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0,
        trials=trials,
    )


def _seed_label(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.entropy) if isinstance(seed.entropy, int) else -1
    return int(seed)


def failure_curve(
    params: CodeParams, scheme: str, grid, trials: int, seed
) -> FailureCurve:
    """P(decoding incomplete after M packets) for each M in the grid."""
    grid = [int(m) for m in grid]
    if sorted(grid) != grid:
        raise ValueError("grid must be sorted ascending")
    if not grid:
        raise ValueError("grid must be nonempty")
    counts = completion_counts(params, scheme, trials, seed, cap=max(grid))
    finished = np.where(counts < 0, np.iinfo(np.int64).max, counts)
    p_fail = tuple(float((finished > m).mean()) for m in grid)
    return FailureCurve(tuple(grid), p_fail, trials, _seed_label(seed))


# ----------------------------------------------------------------------
# Ensemble overlap measurement
# ----------------------------------------------------------------------

def sample_overlaps(params: CodeParams, s: int, samples: int, seed) -> np.ndarray:
    """Per-sample |union(s random generations) ∩ (another generation)|
    over fresh random annex layouts."""
    n = params.n
    if not 0 <= s <= n - 1:
        raise ValueError(f"s={s} must be in [0, n-1]")
    rng = np.random.default_rng(seed)
    N = params.N
    base_pad = np.full((n, params.h), N, dtype=np.int64)  # N = scratch column
    for i in range(n):
        blk = list(params.base_block(i))
        base_pad[i, : len(blk)] = blk
    out = np.empty(samples, dtype=np.int64)
    done = 0
    while done < samples:
        B = min(2048, samples - done)
        annexes = sample_annexes(params, B, rng)          # (B, n, l)
        perm = rng.permuted(
            np.broadcast_to(np.arange(n), (B, n)).copy(), axis=1
        )
        mask = np.zeros((B, N + 1), dtype=bool)           # last col is scratch
        rows = np.arange(B)[:, None]
        chosen = perm[:, :s]
        if s:
            mask[rows, base_pad[chosen].reshape(B, -1)] = True
            if params.l:
                mask[rows, annexes[rows, chosen].reshape(B, -1)] = True
            mask[:, N] = False
        j = perm[:, s]
        target = base_pad[j]
        hits = mask[rows, target].sum(axis=1)
        if params.l:
            hits += mask[rows, annexes[np.arange(B), j]].sum(axis=1)
        out[done : done + B] = hits
        done += B
    return out


def empirical_overlap(params: CodeParams, s: int, samples: int, seed) -> float:
    """Monte Carlo estimate of the expected overlap omega(s)."""
    return float(sample_overlaps(params, s, samples, seed).mean())


def measured_overlap_profile(layout: GenerationLayout, orders: int, seed):
    """Overlap profile of a fixed layout, averaged over uniformly random
    decode orders.

    For each sampled order, the s-th entry accumulates the overlap
    between the union of the first s generations and the (s+1)-th.  Used
    to feed deterministic layouts (e.g. head-to-toe) through the same
    prediction pipeline as the random annex ensemble; sampling noise is
    smoothed by a running maximum so the profile stays nondecreasing.
    """
    from .analysis import OverlapProfile

    p = layout.params
    if orders < 1:
        raise ValueError("orders must be positive")
    rng = np.random.default_rng(seed)
    member_mask = np.zeros((p.n, p.N), dtype=bool)
    for i, gen in enumerate(layout.members):
        member_mask[i, list(gen)] = True
    acc = np.zeros(p.n)
    for _ in range(orders):
        perm = rng.permutation(p.n)
        union = np.zeros(p.N, dtype=bool)
        for s in range(p.n):
            j = perm[s]
            if s:
                acc[s] += np.count_nonzero(union & member_mask[j])
            union |= member_mask[j]
    acc /= orders
    acc = np.maximum.accumulate(acc)
    return OverlapProfile(p, np.minimum(acc, p.g))


def full_rank_waiting_mc(unknowns: int, q: int, trials: int, seed: int) -> np.ndarray:
    """Observed draws of i.i.d. uniform coding vectors until a system of
    `unknowns` unknowns reaches full rank, per trial."""
    if unknowns < 0:
        raise ValueError("unknowns must be nonnegative")
    if unknowns == 0:
        return np.zeros(trials, dtype=np.int64)
    field = get_field(q)
    return _full_rank_waits(
        unknowns, q, field.exp_table, field.log_table, trials, int(seed) & 0x7FFFFFFF
    )
