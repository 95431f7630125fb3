#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure numpy fallback.

The kernels dominate convergence studies: chains of K small matrix
products where per-call dispatch overhead matters.  Run after building
the extension (``pip install -e .``); without it only the pure numbers
print.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from spinqds.kernels import pure

try:
    from spinqds.kernels import _core
except ImportError:
    _core = None


def timed(fn, *args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_case(name, args_by_impl, repeats):
    row = {"case": name}
    for label, (fn, args) in args_by_impl.items():
        row[label] = timed(fn, *args, repeats=repeats)
    return row


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--steps", type=int, default=20_000)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rows = []
    for dim in (4, 8, 16, 32):
        mat = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        mat /= np.linalg.norm(mat, 2)  # keep the chain bounded
        block = np.eye(dim, dtype=complex)
        ops = np.ascontiguousarray(
            np.stack([mat, 0.1 * mat.conj().T]))
        x = np.eye(dim, dtype=complex)
        blocks = (rng.normal(size=(2, 2, dim, dim))
                  + 1j * rng.normal(size=(2, 2, dim, dim)))
        amps = np.ones((args.steps, 2), dtype=complex)
        amps[:, 1] = 0.01
        assembled = np.einsum("a,b,abij->ij", amps[0].conj(), amps[0], blocks)
        blocks = np.ascontiguousarray(blocks / np.linalg.norm(assembled, 2))

        impls = {"pure": pure}
        if _core is not None:
            impls["compiled"] = _core
        for kernel, call_args in [
            ("repeated_apply", (mat, block, args.steps)),
            ("kraus_power", (ops, x, args.steps)),
            ("amplitude_chain", (blocks, amps, amps)),
        ]:
            case = {"case": f"{kernel} d={dim} K={args.steps}"}
            for label, impl in impls.items():
                case[label] = timed(getattr(impl, kernel), *call_args,
                                    repeats=args.repeats)
            rows.append(case)

    width = max(len(r["case"]) for r in rows)
    have_compiled = _core is not None
    header = f"{'case':<{width}}  {'pure':>10}"
    if have_compiled:
        header += f"  {'compiled':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for row in rows:
        line = f"{row['case']:<{width}}  {row['pure']:>9.4f}s"
        if have_compiled:
            speedup = row["pure"] / row["compiled"]
            line += f"  {row['compiled']:>9.4f}s  {speedup:>7.2f}x"
        print(line)
    if not have_compiled:
        print("\ncompiled core not built; showing pure backend only")


if __name__ == "__main__":
    main()
