"""Bundled sample programs: small, deterministic, arithmetic-bearing modules
used by the test suite and the corpus experiment script.

Every program exports a no-argument `main`; most also export a parameterized
`run` so behavior can be compared across many input vectors. MAIN_RESULTS
records the expected `main` value of each program.
"""

from importlib import resources

MAIN_RESULTS = {
    "abs_select": 12,
    "average_shift": 15,
    "bit_flags": 13,
    "branch_abs": 21,
    "call_chain": 42,
    "clamp_range": 100,
    "constant_fold": 25264,
    "double_negate": 42,
    "global_accumulate": 8,
    "max_select": 9,
    "memory_cell": 42,
    "min_select": 3,
    "mul_add": 30,
    "negate_mask": 253,
    "parity_mask": 1,
    "popcount_loop": 5,
    "rotate_mix": 8,
    "same_trace": 7,
    "scale_shift": 42,
    "store_loop": 81,
    "sub_negative": 42,
    "sum_loop": 55,
    "threshold": 1,
    "triple": 42,
    "xor_swap": 11,
}


def names() -> list[str]:
    return sorted(MAIN_RESULTS)


def load(name: str) -> str:
    return resources.files(__name__).joinpath(f"{name}.wat").read_text()
