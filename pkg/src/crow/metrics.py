"""Dynamic time warping distances over instruction streams and stack traces.

Token distance is 0/1 on exact equality, so costs count mismatched
alignment steps and 0 means the two sequences are indistinguishable up to
run-length stretching. The recurrence is the classic
D(i,j) = d(i,j) + min(D(i-1,j), D(i,j-1), D(i-1,j-1)) with D(0,0) = 0 and
infinite borders; one empty sequence costs the other's length.

The implementation vectorizes each DP row: with prefix sums S of the row's
costs, D(i,j) = S(j) + min_{k<=j} (min(D(i-1,k), D(i-1,k-1)) - S(k-1)),
a running minimum, so a row is three numpy passes instead of a Python loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interp import Trace
from .wat import Module

TokenSeq = list[str]


@dataclass(frozen=True)
class DtwResult:
    cost: int
    len_a: int
    len_b: int


def tokenize(m: Module) -> TokenSeq:
    """Instruction tokens (`mnemonic[ immediate]`) over functions in index
    order, including structure tokens."""
    return [str(ins) for f in m.functions for ins in f.body]


def trace_tokens(trace: Trace) -> TokenSeq:
    return [f"{ev.kind} {ev.value}" for ev in trace]


def _encode(a: TokenSeq, b: TokenSeq):
    ids: dict[str, int] = {}
    enc = lambda seq: np.array([ids.setdefault(t, len(ids)) for t in seq], dtype=np.int64)
    return enc(a), enc(b)


def dtw(a: TokenSeq, b: TokenSeq) -> DtwResult:
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return DtwResult(cost=max(n, m), len_a=n, len_b=m)
    ea, eb = _encode(a, b)
    if m > n:  # iterate over the longer side's rows; cost is symmetric
        ea, eb, n, m = eb, ea, m, n
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    zero = np.zeros(1)
    for i in range(n):
        cost = (eb != ea[i]).astype(np.float64)
        mrow = np.minimum(prev[1:], prev[:-1])
        s = np.cumsum(cost)
        run = np.minimum.accumulate(mrow - np.concatenate((zero, s[:-1])))
        prev = np.concatenate((np.array([np.inf]), s + run))
    return DtwResult(cost=int(prev[m]), len_a=len(a), len_b=len(b))


def dt_static(m1: Module, m2: Module) -> int:
    """DTW cost between the instruction streams of two modules; 0 iff the
    streams are identical up to run collapsing."""
    return dtw(tokenize(m1), tokenize(m2)).cost


def dt_dyn(t1: Trace, t2: Trace) -> int:
    """DTW cost between two stack-operation traces (`kind value` tokens)."""
    return dtw(trace_tokens(t1), trace_tokens(t2)).cost


def normalized_dt_dyn(t_orig: Trace, t_var: Trace) -> float:
    """dt_dyn scaled by the original trace's length, for cross-program
    comparison; variants at or above 0.8 diversify execution significantly."""
    if len(t_orig) == 0:
        raise ValueError("original trace is empty")
    return dt_dyn(t_orig, t_var) / len(t_orig)
