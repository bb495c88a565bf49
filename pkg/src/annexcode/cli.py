"""Command-line sweeps: analytical predictions, Monte Carlo simulation,
side-by-side comparison, overlap tables, and a self-test.

All randomness flows from the single --seed flag; output files are
written atomically and start with one metadata line echoing the full
configuration.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import analysis, layout as layout_mod, simulate
from .gfield import GF, get_field
from .layout import CodeParams, build_layout, layout_statistics

SCHEMES = ("random-annex", "head-to-toe", "disjoint")


def parse_int_list(text: str) -> list[int]:
    """'12' -> [12]; '4,8,12' -> [4,8,12]; '0:16' -> 0..16; '0:16:4' -> step 4."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3) or not all(p.lstrip("-").isdigit() for p in parts):
            raise ValueError(f"bad range {text!r}; expected start:stop[:step]")
        start, stop = int(parts[0]), int(parts[1])
        step = int(parts[2]) if len(parts) == 3 else 1
        if step < 1 or stop < start:
            raise ValueError(f"bad range {text!r}")
        return list(range(start, stop + 1, step))
    vals = [int(v) for v in text.split(",") if v.strip() != ""]
    if not vals:
        raise ValueError("empty value list")
    return vals


def _add_common(p: argparse.ArgumentParser, *, trials: bool = False, grid: bool = False):
    p.add_argument("--N", type=int, default=1000, help="total information packets")
    p.add_argument("--h", type=int, default=None,
                   help="base generation size (omit when --g-fixed is used)")
    p.add_argument("--l", type=str, default="0",
                   help="annex size: value, comma list, or start:stop[:step] range")
    p.add_argument("--g-fixed", dest="g_fixed", type=int, default=None,
                   help="hold g = h+l constant while sweeping l (h = g - l per point)")
    p.add_argument("--q", type=int, default=256, help="field size (power of two)")
    p.add_argument("--scheme", type=str, default="random-annex",
                   help=f"comma-separated subset of {', '.join(SCHEMES)}")
    p.add_argument("--seed", type=int, default=1, help="master seed for all randomness")
    p.add_argument("--order-samples", type=int, default=512,
                   help="decode orders sampled for empirical-profile predictions")
    if trials:
        p.add_argument("--trials", type=int, default=200, help="Monte Carlo trials per point")
    if grid:
        p.add_argument("--grid", type=str, default=None,
                       help="received-packet counts for a failure curve "
                            "(value list or range; switches output to p_fail rows)")
    p.add_argument("--out", type=str, default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="annexcode",
        description="Random annex codes: throughput prediction and exact simulation",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="analytical expected-packets sweep")
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo packets-to-completion sweep")
    _add_common(p, trials=True, grid=True)

    p = sub.add_parser("compare", help="merged analytical and simulated table")
    _add_common(p, trials=True)

    p = sub.add_parser("overlap", help="expected overlap table omega(s)")
    _add_common(p)

    p = sub.add_parser("selftest", help="quick internal consistency checks")
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    return ap


# ----------------------------------------------------------------------
# Sweep helpers
# ----------------------------------------------------------------------

def _sweep_points(args) -> list[CodeParams]:
    ls = parse_int_list(args.l)
    if args.g_fixed is not None:
        if args.h is not None:
            raise ValueError("give either --h or --g-fixed, not both")
        pts = []
        for l in ls:
            h = args.g_fixed - l
            if h < 1:
                raise ValueError(f"g-fixed={args.g_fixed} leaves h={h} < 1 at l={l}")
            pts.append(CodeParams(N=args.N, h=h, l=l, q=args.q))
        return pts
    h = args.h if args.h is not None else 25
    return [CodeParams(N=args.N, h=h, l=l, q=args.q) for l in ls]


def _schemes(args) -> list[str]:
    names = [s.strip() for s in args.scheme.split(",") if s.strip()]
    if not names:
        raise ValueError("at least one scheme is required")
    for s in names:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}; expected subset of {SCHEMES}")
    return names


def _point_params(params: CodeParams, scheme: str) -> CodeParams | None:
    """Scheme-adjusted parameters for one sweep point (None = skip)."""
    if scheme == "disjoint":
        if params.l != 0:
            return None
        return params
    if scheme == "head-to-toe" and params.l > params.h:
        return None
    return params


def _predict(params: CodeParams, scheme: str, seed: int, order_samples: int):
    """(prediction, method) for one point."""
    if scheme in ("random-annex", "disjoint"):
        return analysis.predict_expected_packets(params), "closed-form"
    lay = build_layout(params, scheme)
    profile = simulate.measured_overlap_profile(lay, order_samples, seed)
    return analysis.predict_from_overlap(params, profile), "empirical-profile"


def _point_seed(master: int, tag: tuple[int, ...]) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=master, spawn_key=tag)


def cmd_analyze(args) -> tuple[list[dict], dict]:
    points = _sweep_points(args)
    schemes = _schemes(args)
    rows = []
    for si, scheme in enumerate(schemes):
        for li, params in enumerate(points):
            p = _point_params(params, scheme)
            if p is None:
                continue
            seed = _point_seed(args.seed, (si, li))
            pred, method = _predict(p, scheme, seed, args.order_samples)
            rows.append(
                {
                    "N": p.N, "h": p.h, "l": p.l, "q": p.q, "scheme": scheme,
                    "predicted_expected_packets": f"{pred:.4f}", "method": method,
                }
            )
    return rows, _config_echo(args)


def cmd_simulate(args) -> tuple[list[dict], dict]:
    if args.trials < 1:
        raise ValueError("trials must be positive")
    points = _sweep_points(args)
    schemes = _schemes(args)
    grid = parse_int_list(args.grid) if args.grid else None
    rows = []
    for si, scheme in enumerate(schemes):
        for li, params in enumerate(points):
            p = _point_params(params, scheme)
            if p is None:
                continue
            seed = _point_seed(args.seed, (si, li))
            if grid is None:
                est = simulate.mean_packets(p, scheme, args.trials, seed)
                rows.append(
                    {
                        "scheme": scheme, "N": p.N, "h": p.h, "l": p.l, "q": p.q,
                        "trials": est.trials, "mean_packets": f"{est.mean:.4f}",
                        "stderr": f"{est.stderr:.4f}", "seed": args.seed,
                    }
                )
            else:
                fc = simulate.failure_curve(p, scheme, grid, args.trials, seed)
                for m, pf in zip(fc.grid, fc.p_fail):
                    rows.append(
                        {
                            "scheme": scheme, "N": p.N, "h": p.h, "l": p.l, "q": p.q,
                            "M": m, "p_fail": f"{pf:.6f}",
                            "trials": fc.trials, "seed": args.seed,
                        }
                    )
    return rows, _config_echo(args)


def cmd_compare(args) -> tuple[list[dict], dict]:
    if args.trials < 1:
        raise ValueError("trials must be positive")
    points = _sweep_points(args)
    schemes = _schemes(args)
    rows = []
    for si, scheme in enumerate(schemes):
        for li, params in enumerate(points):
            p = _point_params(params, scheme)
            if p is None:
                continue
            seed = _point_seed(args.seed, (si, li))
            pred, method = _predict(p, scheme, seed, args.order_samples)
            est = simulate.mean_packets(p, scheme, args.trials, seed)
            rel = (pred - est.mean) / est.mean if est.mean else math.nan
            rows.append(
                {
                    "scheme": scheme, "N": p.N, "h": p.h, "l": p.l, "q": p.q,
                    "predicted": f"{pred:.4f}", "simulated": f"{est.mean:.4f}",
                    "stderr": f"{est.stderr:.4f}", "rel_error": f"{rel:+.5f}",
                    "trials": est.trials, "seed": args.seed, "method": method,
                }
            )
    return rows, _config_echo(args)


def cmd_overlap(args) -> tuple[list[dict], dict]:
    points = _sweep_points(args)
    rows = []
    for params in points:
        prof = analysis.omega_profile(params)
        for s, w in enumerate(prof.omega):
            rows.append(
                {
                    "N": params.N, "h": params.h, "l": params.l, "q": params.q,
                    "s": s, "omega": f"{w:.6f}", "remaining": f"{params.g - w:.6f}",
                }
            )
    return rows, _config_echo(args)


def cmd_selftest(args) -> tuple[list[dict], dict]:
    checks: list[tuple[str, bool, str]] = []

    def check(name: str, fn) -> None:
        try:
            fn()
            checks.append((name, True, ""))
        except Exception as exc:  # noqa: BLE001 - report any failure
            checks.append((name, False, f"{type(exc).__name__}: {exc}"))

    def field_axioms():
        gf = GF(4)
        for a in gf.elements():
            for b in gf.elements():
                assert gf.mul(a, b) == gf.mul(b, a)
                if a:
                    assert gf.mul(a, gf.inv(a)) == 1
                for c in gf.elements():
                    assert gf.mul(a, gf.add(b, c)) == gf.add(gf.mul(a, b), gf.mul(a, c))

    def linear_algebra():
        gf = get_field(256)
        rng = np.random.default_rng(7)
        mat = rng.integers(0, 256, (6, 6))
        rhs = rng.integers(0, 256, (6, 2))
        if gf.rank(mat) == 6:
            x = gf.solve(mat, rhs)
            assert np.array_equal(gf.matmul(mat, x), rhs)

    def layout_invariants():
        params = CodeParams(N=6, h=2, l=1, q=16)
        lay = layout_mod.make_random_annex(params, 3)
        assert all(len(g) == 3 for g in lay.members)
        stats = layout_statistics(params)
        assert abs(stats.overlap_prob - 0.875) < 1e-12

    def decode_roundtrip():
        params = CodeParams(N=12, h=3, l=1, q=16)
        lay = layout_mod.make_random_annex(params, 5)
        res = simulate.run_trial(lay, 11)
        assert res.completed

    def collection_identity():
        n = 5
        expect = n * sum(1.0 / i for i in range(1, n + 1))
        got = analysis.expected_collection(n, analysis.CollectorProfile((n,), (1,)))
        assert abs(got - expect) < 1e-6

    check("field axioms GF(16)", field_axioms)
    check("rank/solve GF(256)", linear_algebra)
    check("layout invariants", layout_invariants)
    check("trial decode roundtrip", decode_roundtrip)
    check("coupon collection identity", collection_identity)

    rows = [
        {"check": name, "status": "pass" if ok else "fail", "detail": detail}
        for name, ok, detail in checks
    ]
    config = {"command": "selftest"}
    if any(not ok for _, ok, _ in checks):
        config["failed"] = True
    return rows, config


# ----------------------------------------------------------------------
# Output plumbing
# ----------------------------------------------------------------------

def _config_echo(args) -> dict:
    skip = {"out", "format"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _render(rows: list[dict], config: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps({"config": config, "rows": rows}, indent=2) + "\n"
    buf = io.StringIO()
    buf.write("# " + json.dumps(config) + "\n")
    if rows:
        cols = list(rows[0].keys())
        buf.write(",".join(cols) + "\n")
        for row in rows:
            buf.write(",".join(str(row[c]) for c in cols) + "\n")
    return buf.getvalue()


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".annexcode-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    handlers = {
        "analyze": cmd_analyze,
        "simulate": cmd_simulate,
        "compare": cmd_compare,
        "overlap": cmd_overlap,
        "selftest": cmd_selftest,
    }
    try:
        rows, config = handlers[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = _render(rows, config, args.format)
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    if args.command == "selftest" and config.get("failed"):
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
