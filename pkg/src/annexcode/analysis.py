"""Analytical engine: overlap statistics and the throughput predictor.

The predictor pipeline has four steps:

1. expected overlap sizes between a growing union of decoded generations
   and each remaining one (closed form for the random annex ensemble, or
   an externally measured profile for deterministic layouts);
2. per-step coded-packet requirements via the full-rank waiting estimate
   eta, extended to real arguments and quantized to integers;
3. condensation of the per-step requirements into distinct levels
   (thresholds k_1 < ... < k_A with requirements m_1 > ... > m_A > 0);
4. the expected number of uniformly scheduled draws that meet all levels
   simultaneously, as an improper integral whose integrand is evaluated
   with a stable O(A n^2) recursion and integrated by adaptive
   Gauss-Legendre panels over a truncated tail.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammainc, gammaincc, gammaln

from .layout import CodeParams

_TAIL_EPS = 1e-12        # truncate the integral where the integrand drops below this
_CLAMP_SLACK = 1e-9      # integrand excursions beyond [0,1] larger than this are bugs
_CEIL_NUDGE = 1e-9       # downward nudge before integer quantization
_EXP_UNDERFLOW = 700.0   # beyond this, exp(-x) underflows; switch to log-space pmf


# ----------------------------------------------------------------------
# Overlap structure
# ----------------------------------------------------------------------

def omega(params: CodeParams, s: int | float) -> float:
    """Expected overlap between the union of s generations and one more.

    With pi = l/(N-h), this is g*(1 - (1-pi)^s) + s*h*pi*(1-pi)^s.
    """
    n = params.n
    if not 0 <= s <= n - 1:
        raise ValueError(f"s={s} must be in [0, n-1]")
    if params.l == 0:
        return 0.0
    pi = params.l / (params.N - params.h)
    pib = 1.0 - pi
    return params.g * (1.0 - pib**s) + s * params.h * pi * pib**s


@dataclass(frozen=True)
class OverlapProfile:
    """Expected overlap sizes omega(s) for s = 0 .. n-1."""

    params: CodeParams
    omega: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.omega, dtype=float)
        if w.shape != (self.params.n,):
            raise ValueError("profile length must equal the number of generations")
        if abs(w[0]) > 1e-12:
            raise ValueError("omega(0) must be 0")
        if np.any(np.diff(w) < -1e-9):
            raise ValueError("omega must be nondecreasing in s")
        if np.any(w > self.params.g + 1e-9):
            raise ValueError("omega cannot exceed the generation size")
        object.__setattr__(self, "omega", w)


def omega_profile(params: CodeParams) -> OverlapProfile:
    """Closed-form overlap profile of the random annex ensemble."""
    vals = np.array([omega(params, s) for s in range(params.n)])
    return OverlapProfile(params, vals)


def omega_asymptotic(h: float, alpha: float, beta: float) -> float:
    """Limit of omega(s)/1 as n grows with l/h -> alpha and s/n -> beta:
    h * [(1+alpha)(1 - e^(-alpha*beta)) + alpha*beta*e^(-alpha*beta)]."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if not 0 <= beta <= 1:
        raise ValueError("beta must be in [0, 1]")
    ab = alpha * beta
    return h * ((1.0 + alpha) * (-math.expm1(-ab)) + ab * math.exp(-ab))


# ----------------------------------------------------------------------
# Full-rank waiting estimates (expected packets to decode a generation)
# ----------------------------------------------------------------------

def eta(g: int, x: float, q: int) -> float:
    """Closed-form upper estimate of the expected coded packets a
    generation of size g needs once x of its members are resolved.

    Defined for real x; 0 when x >= g, floored at 0 on (g-1, g) where the
    estimate turns negative.
    """
    if q < 2:
        raise ValueError("q must be at least 2")
    if x >= g:
        return 0.0
    u = g - x
    lq = math.log(q)
    val = u + (1.0 / q) / (1.0 - 1.0 / q) + (
        math.log(-math.expm1(-u * lq)) - math.log(1.0 - 1.0 / q)
    ) / lq
    return max(val, 0.0)


def eta_exact(g: int, x: float, q: int) -> float:
    """Exact expected draws of i.i.d. uniform coding vectors until a
    (g-x)-unknown system reaches full rank: sum_{i=1}^{g-x} 1/(1-q^-i).
    Requires g-x to be a nonnegative integer."""
    if q < 2:
        raise ValueError("q must be at least 2")
    u = g - x
    ui = round(u)
    if abs(u - ui) > 1e-9 or ui < 0:
        raise ValueError("eta_exact needs an integer number of unknowns g-x >= 0")
    return sum(1.0 / -math.expm1(-i * math.log(q)) for i in range(1, ui + 1))


# ----------------------------------------------------------------------
# Partial exponential sums and Poisson window probabilities
# ----------------------------------------------------------------------

def partial_exp_sum(m, x: float) -> float:
    """S_m(x): the degree-(m-1) partial sum of e^x; S_0 = 0, S_inf = e^x."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if m == math.inf:
        return math.exp(x) if x <= _EXP_UNDERFLOW else math.inf
    m = int(m)
    if m < 0:
        raise ValueError("m must be a nonnegative integer or inf")
    if m == 0:
        return 0.0
    term = 1.0
    acc = 1.0
    for i in range(1, m):
        term *= x / i
        acc += term
    return acc


def weighted_gap(m_hi, m_lo: int, x) -> np.ndarray | float:
    """(S_{m_hi}(x) - S_{m_lo}(x)) * e^(-x), evaluated stably as the
    Poisson probability P(m_lo <= Pois(x) < m_hi).

    m_hi may be inf (upper tail).  Accepts scalar or array x; the finite
    window is a sum of pmf terms from the multiplicative recurrence
    t_{i+1} = t_i * x/(i+1), log-started where e^(-x) underflows.
    """
    scalar = np.isscalar(x)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0):
        raise ValueError("x must be nonnegative")
    if m_lo < 0:
        raise ValueError("m_lo must be nonnegative")
    if m_hi != math.inf:
        m_hi = int(m_hi)
        if m_hi < m_lo:
            raise ValueError("need m_hi >= m_lo")
    if m_hi == math.inf:
        out = np.ones_like(xs) if m_lo == 0 else gammainc(m_lo, xs)
    elif m_hi == m_lo:
        out = np.zeros_like(xs)
    else:
        out = np.zeros_like(xs)
        small = xs <= _EXP_UNDERFLOW
        if small.any():
            xv = xs[small]
            t = np.exp(-xv)
            acc = t.copy() if m_lo == 0 else np.zeros_like(xv)
            for i in range(1, m_hi):
                t = t * xv / i
                if i >= m_lo:
                    acc += t
            out[small] = acc
        if (~small).any():
            xv = xs[~small]
            i = np.arange(m_lo, m_hi, dtype=float)
            logpmf = -xv[:, None] + i[None, :] * np.log(xv)[:, None] - gammaln(i + 1)[None, :]
            out[~small] = np.exp(logpmf).sum(axis=1)
    return float(out[0]) if scalar else out


# ----------------------------------------------------------------------
# Requirement profiles (Theorem-style thresholds/levels)
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class CollectorProfile:
    """Collection requirement: for each level j, at least k_j generations
    must hold at least m_j packets, with 1 <= k_1 < ... < k_A and
    m_1 > ... > m_A > 0.  Empty profile means nothing is required.

    Requirements are integers in the classical setting; real-valued
    levels are also accepted, in which case the collection probabilities
    interpolate through the regularized incomplete gamma function.
    """

    k: tuple[int, ...]
    m: tuple[int | float, ...]

    def __post_init__(self) -> None:
        if len(self.k) != len(self.m):
            raise ValueError("thresholds and requirements must pair up")
        k, m = self.k, self.m
        if any(int(v) != v for v in k):
            raise ValueError("thresholds must be integers")
        if k and k[0] < 1:
            raise ValueError("thresholds must be at least 1")
        if any(b <= a for a, b in zip(k, k[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if m and m[-1] <= 0:
            raise ValueError("requirements must be positive")
        if any(b >= a for a, b in zip(m, m[1:])):
            raise ValueError("requirements must be strictly decreasing")

    @property
    def A(self) -> int:
        return len(self.k)


def condense(m_prime) -> CollectorProfile:
    """Group a nonincreasing per-step requirement list into distinct
    levels.  m_j is the j-th distinct positive value; k_j the (1-based)
    index of its last occurrence.  Trailing zero requirements are vacuous
    and dropped."""
    vals = [int(v) for v in m_prime]
    if any(b > a for a, b in zip(vals, vals[1:])):
        raise ValueError("per-step requirements must be nonincreasing")
    if any(v < 0 for v in vals):
        raise ValueError("requirements must be nonnegative")
    ks: list[int] = []
    ms: list[int] = []
    for idx, v in enumerate(vals, start=1):
        if v == 0:
            break
        if ms and ms[-1] == v:
            ks[-1] = idx
        else:
            ms.append(v)
            ks.append(idx)
    return CollectorProfile(tuple(ks), tuple(ms))


def condense_real(levels) -> CollectorProfile:
    """condense for real-valued per-step requirements (ties merged,
    nonpositive tail dropped)."""
    vals = [float(v) for v in levels]
    if any(b > a + 1e-12 for a, b in zip(vals, vals[1:])):
        raise ValueError("per-step requirements must be nonincreasing")
    ks: list[int] = []
    ms: list[float] = []
    for idx, v in enumerate(vals, start=1):
        if v <= 0:
            break
        if ms and abs(ms[-1] - v) <= 1e-12:
            ks[-1] = idx
        else:
            ms.append(v)
            ks.append(idx)
    return CollectorProfile(tuple(ks), tuple(ms))


# ----------------------------------------------------------------------
# The collection integrand and its integral
# ----------------------------------------------------------------------

@lru_cache(maxsize=32)
def _log_binom_table(n: int) -> np.ndarray:
    lfact = gammaln(np.arange(n + 1, dtype=float) + 1.0)
    k = np.arange(n + 1)
    out = (
        lfact[k][:, None]
        - lfact[k][None, :]
        - lfact[np.maximum(k[:, None] - k[None, :], 0)]
    )
    out[k[:, None] < k[None, :]] = -np.inf
    return out


def _poisson_tail(m, xs: np.ndarray) -> np.ndarray:
    """P(Pois(x) >= m) for integer or real m >= 0 (regularized lower
    incomplete gamma; the identity is exact at integer m)."""
    if m == 0:
        return np.ones_like(xs)
    return gammainc(m, xs)


def _level_weights(profile: CollectorProfile, xs: np.ndarray) -> list[np.ndarray]:
    """Poisson window probabilities p_j, j = 0..A, at each x."""
    ms = profile.m
    A = profile.A
    integral = all(float(v).is_integer() for v in ms)
    ps = []
    for j in range(A + 1):
        hi = math.inf if j == 0 else ms[j - 1]
        lo = ms[j] if j < A else 0
        if integral and j > 0:
            ps.append(np.asarray(weighted_gap(int(hi) if hi != math.inf else hi, int(lo), xs)))
        else:
            lo_tail = _poisson_tail(lo, xs)
            hi_tail = np.zeros_like(xs) if hi == math.inf else _poisson_tail(hi, xs)
            direct = lo_tail - hi_tail
            # P(C < hi) - P(C < lo) is the cancellation-free form when
            # both upper tails are close to one
            hi_cdf = np.ones_like(xs) if hi == math.inf else gammaincc(hi, xs)
            lo_cdf = np.zeros_like(xs) if lo == 0 else gammaincc(lo, xs)
            ps.append(np.where(lo_tail > 0.5, hi_cdf - lo_cdf, direct))
    return ps


def _one_minus_phi(n: int, profile: CollectorProfile, xs: np.ndarray) -> np.ndarray:
    """Vectorized integrand 1 - phi_{A,n}(x).

    phi_{0,k} = p_0^k and
    phi_{j,k} = sum_{w=k_j}^{k} C(k,w) p_j^(k-w) phi_{j-1,w},
    with binomial weights and powers folded together in log space so that
    nothing overflows even when C(n, n/2) would.
    """
    xs = np.asarray(xs, dtype=float)
    ps = _level_weights(profile, xs)
    ks = profile.k
    A = profile.A
    lgC = _log_binom_table(n)
    karr = np.arange(n + 1)
    kk = karr[:, None]
    ww = karr[None, :]
    out = np.empty_like(xs)
    for lo_idx in range(0, xs.size, 64):
        sl = slice(lo_idx, min(lo_idx + 64, xs.size))
        with np.errstate(divide="ignore", invalid="ignore"):
            logp0 = np.log(ps[0][sl])[:, None]
            phi = np.where(karr[None, :] >= ks[0], np.exp(karr[None, :] * logp0), 0.0)
            for j in range(1, A + 1):
                kj = ks[j - 1]
                logpj = np.log(ps[j][sl])[:, None, None]
                logphi = np.log(phi)[:, None, :]
                powers = np.where(kk == ww, 0.0, (kk - ww) * logpj)
                terms = np.exp(lgC[None, :, :] + powers + logphi)
                mask = (ww >= kj) & (ww <= kk)
                phi = np.where(mask[None, :, :], terms, 0.0).sum(axis=2)
        out[sl] = 1.0 - phi[:, n]
    bad = max(np.max(out, initial=0.0) - 1.0, -np.min(out, initial=1.0))
    if bad > _CLAMP_SLACK:
        raise ArithmeticError(f"integrand left [0,1] by {bad:.3e}; numerical bug")
    return np.clip(out, 0.0, 1.0)


def integrand(n: int, profile: CollectorProfile, x):
    """1 - phi_{A,n}(x): probability the requirement profile is not yet
    met when every generation's packet count is i.i.d. Poisson(x)."""
    _check_profile(n, profile)
    if profile.A == 0:
        return 0.0 if np.isscalar(x) else np.zeros_like(np.asarray(x, dtype=float))
    scalar = np.isscalar(x)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0):
        raise ValueError("x must be nonnegative")
    vals = _one_minus_phi(n, profile, xs)
    return float(vals[0]) if scalar else vals


def integrand_term_count(n: int, profile: CollectorProfile) -> int:
    """Inner-sum terms per integrand evaluation (the O(A n^2) budget)."""
    total = (math.ceil(profile.m[0]) if profile.A else 0) + n
    for kj in profile.k:
        total += sum(k - kj + 1 for k in range(kj, n + 1))
    return int(total)


def _check_profile(n: int, profile: CollectorProfile) -> None:
    if n < 1:
        raise ValueError("n must be at least 1")
    if profile.A and profile.k[-1] > n:
        raise ValueError("largest threshold exceeds the number of generations")


_GL_NODES, _GL_WEIGHTS = leggauss(16)


def _panel(f, a: float, b: float) -> float:
    xs = 0.5 * (b - a) * (_GL_NODES + 1.0) + a
    return 0.5 * (b - a) * float(np.dot(_GL_WEIGHTS, f(xs)))


def expected_collection(n: int, profile: CollectorProfile, rel_tol: float = 1e-8) -> float:
    """Expected number of uniform draws over n generations until, for
    every level j, at least k_j generations have at least m_j draws.

    Computed as n times the integral of the collection integrand over
    [0, x_max], where x_max is found by geometric scanning for the point
    the integrand falls below 1e-12, and the integral uses adaptive
    Gauss-Legendre panels with interval-halving error control.
    """
    _check_profile(n, profile)
    if profile.A == 0:
        return 0.0
    f = lambda xs: _one_minus_phi(n, profile, xs)

    xmax = 1.0
    while float(f(np.array([xmax]))[0]) >= _TAIL_EPS:
        xmax *= 2.0
        if xmax > 2.0**40:  # pragma: no cover - cannot happen for valid profiles
            raise ArithmeticError("integrand failed to decay")

    panels = 8
    edges = np.linspace(0.0, xmax, panels + 1)
    stack = [(edges[i], edges[i + 1], _panel(f, edges[i], edges[i + 1]))
             for i in range(panels)]
    rough = sum(est for _, _, est in stack)
    budget = rel_tol * max(abs(rough), 1e-300)
    total = 0.0
    work = list(stack)
    iterations = 0
    while work:
        a, b, est = work.pop()
        mid = 0.5 * (a + b)
        left = _panel(f, a, mid)
        right = _panel(f, mid, b)
        better = left + right
        if abs(better - est) <= budget * (b - a) / xmax or (b - a) < 1e-12 * xmax:
            total += better
        else:
            work.append((a, mid, left))
            work.append((mid, b, right))
        iterations += 1
        if iterations > 20000:  # pragma: no cover - defensive cap
            raise ArithmeticError("quadrature failed to converge")
    return n * total


# ----------------------------------------------------------------------
# The four-step throughput predictor
# ----------------------------------------------------------------------

def _quantize(value: float, rounding: str) -> int:
    v = value - _CEIL_NUDGE
    if rounding == "ceil":
        return max(math.ceil(v), 0)
    if rounding == "nearest":
        return max(math.floor(v + 0.5), 0)
    raise ValueError("rounding must be 'nearest' or 'ceil'")


def step_requirements(
    params: CodeParams,
    overlap: OverlapProfile | None = None,
    rounding: str = "ceil",
) -> np.ndarray:
    """Per-step packet requirements m'_s = quantize(eta(omega(s-1))) for
    s = 1..n.  Nonincreasing by construction; checked before use."""
    if overlap is None:
        overlap = omega_profile(params)
    reqs = np.array(
        [_quantize(eta(params.g, w, params.q), rounding) for w in overlap.omega],
        dtype=np.int64,
    )
    if np.any(np.diff(reqs) > 0):
        raise ArithmeticError("per-step requirements must be nonincreasing")
    return reqs


def predict_from_overlap(
    params: CodeParams,
    overlap: OverlapProfile,
    rel_tol: float = 1e-8,
    rounding: str = "continuity",
) -> float:
    """Steps 2-4 of the predictor on an externally supplied overlap
    profile (used for deterministic layouts measured empirically)."""
    if rounding == "continuity":
        levels = [
            e + 0.5 if e > 0 else 0.0
            for e in (eta(params.g, w, params.q) for w in overlap.omega)
        ]
        profile = condense_real(levels)
    else:
        profile = condense(step_requirements(params, overlap, rounding))
    return expected_collection(params.n, profile, rel_tol)


def predict_expected_packets(
    params: CodeParams, rel_tol: float = 1e-8, rounding: str = "continuity"
) -> float:
    """Expected coded packets for full decoding of a random annex code.

    rounding chooses how the real-valued per-step requirements enter the
    collection integral: 'ceil' rounds each up (the literal quantization,
    which overshoots when a requirement sits just above an integer, e.g.
    every generation at l=0 for byte-sized fields); 'nearest' rounds to
    the closest integer (undershoots mid-sweep); 'continuity' (default)
    keeps the real values with a half-packet continuity correction, the
    integer quantization replaced by its average effect.  Measured
    against exact simulation at N=1000, h=25, q=256 the default stays
    within ~2.7% everywhere while either integer rule exceeds 3% at some
    annex size.
    """
    return predict_from_overlap(params, omega_profile(params), rel_tol, rounding)
