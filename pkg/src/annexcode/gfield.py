"""GF(2^m) arithmetic with log/antilog tables, plus exact dense linear algebra.

Field elements are integers in [0, 2^m) whose bits are polynomial
coefficients over GF(2).  Multiplication is carried out modulo an
irreducible reduction polynomial of degree m.  Addition is XOR, so every
element is its own additive inverse and no floating point appears
anywhere in this module.

The default field is GF(256) with the reduction polynomial
x^8 + x^4 + x^3 + x + 1 (0x11B), which keeps packet symbols byte aligned.
"""

from __future__ import annotations

import functools

import numpy as np

# Minimal-weight irreducible polynomials, one per extension degree.
# (The degree-8 entry is 0x11B; its element x is not primitive, so the
# table builder searches for a multiplicative generator instead of
# assuming x works.)
_DEFAULT_POLY = {
    1: 0b11,
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0b100011011,
    9: 0b1000010001,
    10: 0b10000001001,
    11: 0b100000000101,
    12: 0b1000001010011,
    13: 0b10000000011011,
    14: 0b100010001000011,
    15: 0b1000000000000011,
    16: 0b10001000000001011,
}

_MAX_M = 16


def _clmul_mod(a: int, b: int, poly: int, m: int) -> int:
    """Carry-less multiply of a and b reduced mod poly (schoolbook)."""
    acc = 0
    while b:
        if b & 1:
            acc ^= a
        b >>= 1
        a <<= 1
        if a >> m & 1:
            a ^= poly
    return acc


def _poly_gcd(a: int, b: int) -> int:
    """GCD of two GF(2) polynomials encoded as ints."""
    while b:
        while a.bit_length() >= b.bit_length() and a:
            a ^= b << (a.bit_length() - b.bit_length())
        a, b = b, a
    return a


def _is_irreducible(poly: int, m: int) -> bool:
    """Rabin irreducibility test for a degree-m polynomial over GF(2)."""
    if m == 1:
        return True

    def sq_mod(x: int) -> int:
        return _clmul_mod(x, x, poly, m)

    # x^(2^m) == x (mod poly) is necessary.
    t = 0b10
    for _ in range(m):
        t = sq_mod(t)
    if t != 0b10:
        return False
    # gcd(x^(2^(m/p)) - x, poly) == 1 for every prime p dividing m.
    primes = set()
    mm, p = m, 2
    while p * p <= mm:
        while mm % p == 0:
            primes.add(p)
            mm //= p
        p += 1
    if mm > 1:
        primes.add(mm)
    for p in primes:
        t = 0b10
        for _ in range(m // p):
            t = sq_mod(t)
        if _poly_gcd(t ^ 0b10, poly) != 1:
            return False
    return True


class GF:
    """Arithmetic context for GF(2^m).

    Parameters
    ----------
    m : int
        Extension degree, 1 <= m <= 16 (field size q = 2^m).
    poly : int, optional
        Bit-encoded irreducible reduction polynomial of degree m.
        Defaults to a standard minimal-weight choice per degree.

    The constructor validates irreducibility, finds a multiplicative
    generator and builds log/antilog tables, so every product afterwards
    is two table lookups.  Instances are immutable and safe to share
    across concurrent trials.
    """

    def __init__(self, m: int = 8, poly: int | None = None) -> None:
        if not 1 <= m <= _MAX_M:
            raise ValueError(f"extension degree m={m} must be in [1, {_MAX_M}]")
        if poly is None:
            poly = _DEFAULT_POLY[m]
        if poly.bit_length() != m + 1:
            raise ValueError(
                f"reduction polynomial {poly:#x} does not have degree {m}"
            )
        if not _is_irreducible(poly, m):
            raise ValueError(f"reduction polynomial {poly:#x} is reducible")
        self.m = m
        self.poly = poly
        self.q = 1 << m

        self._build_tables()
        # Numpy views used by vector helpers and the simulation kernels.
        # exp is doubled so log[a]+log[b] never needs a modular reduction.
        self.exp_table = np.array(self._exp, dtype=np.int64)
        self.log_table = np.array(self._log, dtype=np.int64)

    def _build_tables(self) -> None:
        q = self.q
        if q == 2:
            self._exp = [1, 1]
            self._log = [0, 0]
            self.generator = 1
            return
        for cand in range(2, q):
            exp = [0] * (2 * (q - 1))
            log = [0] * q
            val = 1
            ok = True
            for i in range(q - 1):
                if val == 1 and i > 0:
                    ok = False  # cycle shorter than q-1: not a generator
                    break
                exp[i] = val
                log[val] = i
                val = _clmul_mod(val, cand, self.poly, self.m)
            if ok and val == 1:
                for i in range(q - 1, 2 * (q - 1)):
                    exp[i] = exp[i - (q - 1)]
                self._exp = exp
                self._log = log
                self.generator = cand
                return
        raise ValueError("no multiplicative generator found")  # pragma: no cover

    # ------------------------------------------------------------------
    # Scalar operations
    # ------------------------------------------------------------------
    def add(self, a: int, b: int) -> int:
        """a + b (XOR; also subtraction in characteristic 2)."""
        return a ^ b

    sub = add

    def mul(self, a: int, b: int) -> int:
        """a * b via log/antilog tables."""
        if a == 0 or b == 0:
            return 0
        return self._exp[self._log[a] + self._log[b]]

    def inv(self, a: int) -> int:
        """Multiplicative inverse; zero has none."""
        if a == 0:
            raise ZeroDivisionError("zero has no multiplicative inverse")
        return self._exp[(self.q - 1) - self._log[a]]

    def div(self, a: int, b: int) -> int:
        """a / b."""
        if b == 0:
            raise ZeroDivisionError("division by zero")
        if a == 0:
            return 0
        return self._exp[self._log[a] - self._log[b] + (self.q - 1)]

    def elements(self) -> range:
        return range(self.q)

    # ------------------------------------------------------------------
    # Vector helpers (numpy int64 arrays of field elements)
    # ------------------------------------------------------------------
    def mul_vec(self, c: int, v: np.ndarray) -> np.ndarray:
        """Scale a vector of field elements by the scalar c."""
        if c == 0:
            return np.zeros_like(v)
        prod = self.exp_table[self.log_table[v] + self._log[c]]
        return np.where(v == 0, 0, prod)

    def dot(self, u: np.ndarray, v: np.ndarray) -> int:
        """Inner product of two equal-length vectors."""
        u = np.asarray(u)
        v = np.asarray(v)
        nz = (u != 0) & (v != 0)
        if not nz.any():
            return 0
        prods = self.exp_table[self.log_table[u[nz]] + self.log_table[v[nz]]]
        return int(np.bitwise_xor.reduce(prods))

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Matrix product over the field (small matrices; used by oracles)."""
        a = np.asarray(a)
        b = np.asarray(b)
        out = np.zeros((a.shape[0], b.shape[1]), dtype=np.int64)
        for i in range(a.shape[0]):
            for j in range(b.shape[1]):
                out[i, j] = self.dot(a[i, :], b[:, j])
        return out

    # ------------------------------------------------------------------
    # Gaussian elimination
    # ------------------------------------------------------------------
    def _eliminate(self, mat: np.ndarray) -> tuple[np.ndarray, list[int]]:
        """Reduce mat to row echelon form in place; returns (mat, pivot cols).

        Pivoting picks the first row with a nonzero entry in the leftmost
        unfinished column (fields have no magnitudes to compare).
        """
        rows, cols = mat.shape
        pivots: list[int] = []
        r = 0
        for c in range(cols):
            if r == rows:
                break
            sel = None
            for i in range(r, rows):
                if mat[i, c] != 0:
                    sel = i
                    break
            if sel is None:
                continue
            if sel != r:
                mat[[r, sel]] = mat[[sel, r]]
            inv = self.inv(int(mat[r, c]))
            mat[r, c:] = self.mul_vec(inv, mat[r, c:])
            for i in range(rows):
                if i != r and mat[i, c] != 0:
                    mat[i, c:] ^= self.mul_vec(int(mat[i, c]), mat[r, c:])
            pivots.append(c)
            r += 1
        return mat, pivots

    def rank(self, mat: np.ndarray) -> int:
        """Row rank by Gaussian elimination over the field."""
        mat = np.array(mat, dtype=np.int64)
        if mat.size == 0:
            return 0
        _, pivots = self._eliminate(mat)
        return len(pivots)

    def solve(self, mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve mat @ X = rhs for X; mat must be square and full rank."""
        mat = np.array(mat, dtype=np.int64)
        rhs = np.array(rhs, dtype=np.int64)
        if rhs.ndim == 1:
            rhs = rhs[:, None]
        n = mat.shape[0]
        if mat.shape[1] != n:
            raise ValueError("coefficient matrix must be square")
        if rhs.shape[0] != n:
            raise ValueError("right-hand side has mismatched rows")
        aug = np.concatenate([mat, rhs], axis=1)
        aug, pivots = self._eliminate(aug)
        if len(pivots) < n or pivots != list(range(n)):
            raise ValueError("matrix is rank deficient; system is singular")
        return aug[:, n:].copy()

    def __repr__(self) -> str:
        return f"GF(m={self.m}, poly={self.poly:#x})"

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, GF) and other.m == self.m and other.poly == self.poly
        )

    def __hash__(self) -> int:
        return hash((self.m, self.poly))


@functools.lru_cache(maxsize=None)
def get_field(q: int = 256, poly: int | None = None) -> GF:
    """Shared GF instance for a power-of-two field size q."""
    m = q.bit_length() - 1
    if q != 1 << m or m < 1:
        raise ValueError(f"field size q={q} must be a power of two >= 2")
    return GF(m, poly)
