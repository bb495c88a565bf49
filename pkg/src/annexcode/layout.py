"""Generation structures: random annex, head-to-toe, and disjoint layouts.

A layout partitions N information packets into n base blocks of h
consecutive packets and extends each block with an annex of l extra
packets.  The random annex draws those l packets uniformly without
replacement from outside the base block; the head-to-toe scheme takes
the l packets that cyclically follow the block; the disjoint scheme has
no annex at all.  Layouts are immutable once built.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from scipy.special import gammaln


@dataclass(frozen=True)
class CodeParams:
    """Code parameters: N packets, base size h, annex size l, field size q,
    d symbols per packet.  n = ceil(N/h) generations of extended size
    g = h + l (the last one is smaller when h does not divide N)."""

    N: int
    h: int
    l: int = 0
    q: int = 256
    d: int = 1

    def __post_init__(self) -> None:
        if self.N < 1:
            raise ValueError("N must be positive")
        if not 1 <= self.h <= self.N:
            raise ValueError("base generation size h must be in [1, N]")
        if not 0 <= self.l <= self.N - self.h:
            raise ValueError("annex size l must be in [0, N-h]")
        if self.q < 2 or self.q & (self.q - 1):
            raise ValueError("field size q must be a power of two >= 2")
        if self.d < 1:
            raise ValueError("packet length d must be positive")

    @property
    def n(self) -> int:
        return -(-self.N // self.h)

    @property
    def g(self) -> int:
        return self.h + self.l

    def base_block(self, i: int) -> range:
        """Packet indices of base block i (0-based)."""
        return range(i * self.h, min((i + 1) * self.h, self.N))


@dataclass(frozen=True)
class GenerationLayout:
    """Membership map of all generations plus its transpose.

    members[i] lists generation i's packets, base block first and annex
    after, each in increasing packet order.  reverse[p] lists the
    generations containing packet p.
    """

    params: CodeParams
    members: tuple[tuple[int, ...], ...]
    reverse: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self) -> None:
        p = self.params
        if len(self.members) != p.n:
            raise ValueError("wrong number of generations")
        rev: list[list[int]] = [[] for _ in range(p.N)]
        for i, gen in enumerate(self.members):
            base = p.base_block(i)
            if len(gen) != len(base) + p.l:
                raise ValueError(f"generation {i} has wrong size")
            if set(gen[: len(base)]) != set(base):
                raise ValueError(f"generation {i} does not start with its base block")
            annex = gen[len(base) :]
            if len(set(annex)) != len(annex) or set(annex) & set(base):
                raise ValueError(f"generation {i} annex overlaps base or repeats")
            for pk in gen:
                if not 0 <= pk < p.N:
                    raise ValueError("packet index out of range")
                rev[pk].append(i)
        object.__setattr__(self, "reverse", tuple(tuple(r) for r in rev))

    def generation_sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.members], dtype=np.int64)

    def members_array(self) -> np.ndarray:
        """(n, gmax) int64 matrix of members, padded with -1."""
        p = self.params
        gmax = max(len(g) for g in self.members)
        arr = np.full((p.n, gmax), -1, dtype=np.int64)
        for i, gen in enumerate(self.members):
            arr[i, : len(gen)] = gen
        return arr

    def to_json(self) -> str:
        return json.dumps(
            {
                "params": {
                    "N": self.params.N,
                    "h": self.params.h,
                    "l": self.params.l,
                    "q": self.params.q,
                    "d": self.params.d,
                },
                "members": [list(g) for g in self.members],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "GenerationLayout":
        obj = json.loads(text)
        params = CodeParams(**obj["params"])
        return cls(params, tuple(tuple(g) for g in obj["members"]))


def sample_annexes(params: CodeParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw annexes for `count` independent layouts at once.

    Returns an int64 array of shape (count, n, l): for each layout, each
    generation's annex as a uniform without-replacement sample from the
    packets outside its base block.  Sampling is a partial Fisher-Yates
    shuffle of the complement, batched across layouts, so the
    distribution is exactly uniform and a fixed Generator state yields a
    fixed result.
    """
    N, h, l, n = params.N, params.h, params.l, params.n
    out = np.empty((count, n, l), dtype=np.int64)
    if l == 0:
        return out
    rows = np.arange(count)
    for i in range(n):
        base = params.base_block(i)
        bsize = len(base)
        csize = N - bsize
        if l > csize:
            raise ValueError("annex larger than complement of base block")
        comp = np.broadcast_to(np.arange(csize, dtype=np.int64), (count, csize)).copy()
        for t in range(l):
            j = rng.integers(t, csize, size=count)
            picked = comp[rows, j]
            comp[rows, j] = comp[:, t]
            comp[:, t] = picked
        annex = comp[:, :l]
        # complement index -> packet index (skip over the base block)
        out[:, i, :] = np.where(annex < base.start, annex, annex + bsize)
    return out


def make_random_annex(params: CodeParams, seed) -> GenerationLayout:
    """Random annex layout: each generation's annex is drawn uniformly
    without replacement from outside its base block.  `seed` may be an
    int, SeedSequence, or Generator."""
    rng = np.random.default_rng(seed)
    annexes = sample_annexes(params, 1, rng)[0]
    members = tuple(
        tuple(params.base_block(i)) + tuple(sorted(int(x) for x in annexes[i]))
        for i in range(params.n)
    )
    return GenerationLayout(params, members)


def make_head_to_toe(params: CodeParams) -> GenerationLayout:
    """Deterministic overlap: each generation's annex is the l packets
    that cyclically follow its base block, so contiguous generations
    share exactly l packets, end-around."""
    if params.l > params.h:
        raise ValueError("head-to-toe overlap requires l <= h")
    N = params.N
    members = []
    for i in range(params.n):
        base = params.base_block(i)
        annex = [(base.stop + t) % N for t in range(params.l)]
        members.append(tuple(base) + tuple(annex))
    return GenerationLayout(params, tuple(members))


def make_disjoint(params: CodeParams) -> GenerationLayout:
    """Non-overlapping generations (requires l = 0)."""
    if params.l != 0:
        raise ValueError("disjoint layout requires l = 0")
    return GenerationLayout(
        params, tuple(tuple(params.base_block(i)) for i in range(params.n))
    )


_SCHEMES = ("random-annex", "head-to-toe", "disjoint")


def build_layout(params: CodeParams, scheme: str, seed=None) -> GenerationLayout:
    """Construct a layout for one of the named schemes."""
    if scheme == "random-annex":
        return make_random_annex(params, seed)
    if scheme == "head-to-toe":
        return make_head_to_toe(params)
    if scheme == "disjoint":
        return make_disjoint(params)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {_SCHEMES}")


@dataclass(frozen=True)
class LayoutStats:
    """Closed-form statistics of the random annex ensemble."""

    pi: float                # membership probability of one packet in one annex
    mean_degree: float       # E[number of generations holding a packet]
    var_degree: float
    expected_unique: float   # E[packets of a generation found nowhere else]
    overlap_prob: float      # P(two given generations share a packet)
    forced_overlap: bool     # annexes cannot avoid each other (N-2h-2l < 0)


def layout_statistics(params: CodeParams) -> LayoutStats:
    """Annex membership probability, packet degree moments, expected
    unique packets per generation, and the pairwise overlap probability
    (computed in log space to survive paper-scale binomials)."""
    N, h, l, n = params.N, params.h, params.l, params.n
    pi = l / (N - h) if N > h else 0.0
    pib = 1.0 - pi
    mean_degree = 1.0 + (n - 1) * pi
    var_degree = (n - 1) * pi * pib
    expected_unique = h * pib ** (n - 1)
    if n < 2:
        return LayoutStats(pi, mean_degree, var_degree, expected_unique, 0.0, False)
    rem = N - 2 * h - 2 * l
    if rem < 0:
        return LayoutStats(pi, mean_degree, var_degree, expected_unique, 1.0, True)

    def lfact(k):
        return gammaln(k + 1)

    log_multinomial = lfact(N - 2 * h) - 2 * lfact(l) - lfact(rem)
    log_choose = lfact(N - h) - lfact(l) - lfact(N - h - l)
    overlap_prob = -math.expm1(log_multinomial - 2 * log_choose)
    return LayoutStats(pi, mean_degree, var_degree, expected_unique, overlap_prob, False)
