import itertools

import pytest

from crow.equiv import CheckerConfig, check
from crow.ir import K_CONST, _reachable_key, extract_module_blocks
from crow.synth import (
    Candidate,
    ConfigError,
    SynthesisConfig,
    Vocabulary,
    constant_pool,
    enumerate_candidates,
    infer_constant,
    prefilter,
    prefilter_vectors,
    synthesize_replacements,
)
from dagutil import C, D, IN, block_of

FAST_CHECKER = CheckerConfig(samples=512)


def small_cfg(**kw):
    defaults = dict(max_size=1, vocabulary=Vocabulary.of("add", "sub", "const"),
                    pool_base=(0, 1), prefilter_random=8)
    defaults.update(kw)
    return SynthesisConfig(**defaults)


# --- enumeration oracle --------------------------------------------------------


def brute_force_size1(ops, leaves):
    """Independent oracle: all single-op trees in (op, left, right) order,
    operand choices rightmost-fastest."""
    out = []
    for op in ops:
        for combo in itertools.product(range(len(leaves)), repeat=2):
            out.append((op, *combo))
    return out


def test_size1_stream_matches_brute_force():
    b = block_of(("eqz", IN(0)), 1)  # no const immediates: pool is exactly the base
    cfg = small_cfg()
    assert constant_pool(b, cfg) == (0, 1)
    got = [_reachable_key(c.dag) for c in enumerate_candidates(b, cfg)]
    leaves = ["i0", "c0", "c1"]
    want = [
        f"{op}({leaves[a]},{leaves[b_]})"
        for op, a, b_ in brute_force_size1(("add", "sub"), leaves)
    ]
    assert got == want
    assert len(got) == 18


def test_stream_excludes_self():
    b = block_of(("add", IN(0), C(0)), 1)
    cfg = small_cfg(pool_base=(0,))
    keys = [_reachable_key(c.dag) for c in enumerate_candidates(b, cfg)]
    assert "add(i0,c0)" not in keys
    # pool: base {0} plus immediate 0 and its neighbors -> {-1, 0, 1}
    assert len(keys) == 2 * 4 * 4 - 1


def test_single_op_vocabulary_exact_stream():
    b = block_of(("eqz", IN(0)), 1)
    cfg = small_cfg(vocabulary=Vocabulary.of("add", "const"))
    got = [_reachable_key(c.dag) for c in enumerate_candidates(b, cfg)]
    assert got == [
        "add(i0,i0)", "add(i0,c0)", "add(i0,c1)",
        "add(c0,i0)", "add(c0,c0)", "add(c0,c1)",
        "add(c1,i0)", "add(c1,c0)", "add(c1,c1)",
    ]


def test_mul_block_reaches_shift_candidate():
    b = block_of(MUL2 := ("mul", IN(0), C(2)), 1)
    cfg = SynthesisConfig(max_size=1, vocabulary=Vocabulary.of("shl", "const"))
    keys = {_reachable_key(c.dag) for c in enumerate_candidates(b, cfg)}
    assert "shl(i0,c1)" in keys


def test_enumeration_indices_are_stream_positions():
    b = block_of(("eqz", IN(0)), 1)
    cands = list(enumerate_candidates(b, small_cfg()))
    assert [c.index for c in cands] == list(range(len(cands)))


def test_size2_trees_are_unique_and_ordered():
    b = block_of(("eqz", IN(0)), 1)
    cfg = small_cfg(max_size=2, vocabulary=Vocabulary.of("add", "const"), pool_base=(0,))
    keys = [_reachable_key(c.dag) for c in enumerate_candidates(b, cfg)]
    assert len(keys) == len(set(keys))
    # iterative deepening: all size-1 trees come before any size-2 tree
    first_size2 = next(i for i, k in enumerate(keys) if k.count("add") == 2)
    assert all(k.count("add") == 2 for k in keys[first_size2:])
    # left-largest split first: add(add(..),leaf) precedes add(leaf,add(..))
    assert keys[first_size2].startswith("add(add(")


# --- constant pool / inference ---------------------------------------------------


def test_pool_includes_negated_immediates():
    b = block_of(("sub", IN(0), C(-5)), 1)
    pool = constant_pool(b, SynthesisConfig())
    assert 5 in pool and -5 in pool and -4 in pool and -6 in pool


def test_infer_constant_zero_input():
    b = block_of(("sub", ("mul", C(158), C(160)), C(16)), 0)
    cand = infer_constant(b, SynthesisConfig())
    assert cand is not None and cand.index == -1
    node = cand.dag.nodes[cand.dag.root]
    assert (node.kind, node.value) == (K_CONST, 25264)


def test_infer_constant_identity_returns_none():
    assert infer_constant(block_of(IN(0), 1), SynthesisConfig()) is None


def test_infer_constant_masked_block():
    cand = infer_constant(block_of(("and", IN(0), C(0)), 1), SynthesisConfig())
    assert cand is not None
    assert cand.dag.nodes[cand.dag.root].value == 0


# --- prefilter -------------------------------------------------------------------


def test_prefilter_accepts_equivalent():
    b = block_of(("mul", IN(0), C(2)), 1)
    vectors = prefilter_vectors(b, SynthesisConfig())
    assert prefilter(b, Candidate(D(("shl", IN(0), C(1))), 0), vectors)


def test_prefilter_kills_on_corner():
    b = block_of(("mul", IN(0), C(2)), 1)
    vectors = prefilter_vectors(b, SynthesisConfig())
    assert not prefilter(b, Candidate(D(("add", IN(0), C(1))), 0), vectors)


def test_prefilter_accepts_comparison_inversion():
    b = block_of(("gt_s", IN(0), C(10)), 1)
    vectors = prefilter_vectors(b, SynthesisConfig())
    assert prefilter(b, Candidate(D(("le_s", C(11), IN(0))), 0), vectors)


def test_prefilter_never_rejects_equivalent_rewrites():
    # metamorphic: known-equivalent pairs must always pass
    cases = [
        (("mul", IN(0), C(8)), ("shl", IN(0), C(3))),
        (("sub", IN(0), C(-9)), ("add", IN(0), C(9))),
        (("xor", IN(0), IN(0)), ("and", C(0), IN(0))),
        (("add", IN(0), IN(0)), ("shl", IN(0), C(1))),
    ]
    cfg = SynthesisConfig()
    for lhs, rhs in cases:
        b = block_of(lhs, 1)
        assert prefilter(b, Candidate(D(rhs), 0), prefilter_vectors(b, cfg))


# --- synthesize_replacements -------------------------------------------------------


def test_mul_block_yields_shift_and_double_add():
    b = block_of(("mul", IN(0), C(2)), 1)
    cfg = SynthesisConfig(max_size=2, vocabulary=Vocabulary.of("shl", "add", "mul", "const"))
    result = synthesize_replacements(b, cfg, FAST_CHECKER)
    keys = {_reachable_key(r.candidate.dag) for r in result.replacements}
    assert "shl(i0,c1)" in keys
    assert "add(i0,i0)" in keys
    assert all(r.tier in ("verified", "probable") for r in result.replacements)


def test_sub_negative_becomes_add():
    b = block_of(("sub", IN(0), C(-5)), 1)
    cfg = SynthesisConfig(max_size=1, vocabulary=Vocabulary.of("add", "const"))
    result = synthesize_replacements(b, cfg, FAST_CHECKER)
    keys = {_reachable_key(r.candidate.dag) for r in result.replacements}
    assert "add(i0,c5)" in keys


def test_empty_vocabulary_rejected():
    with pytest.raises(ConfigError):
        Vocabulary.of()


def test_no_self_replacement():
    b = block_of(("add", IN(0), IN(0)), 1)
    cfg = SynthesisConfig(max_size=1, vocabulary=Vocabulary.of("add", "const"))
    result = synthesize_replacements(b, cfg, FAST_CHECKER)
    self_seq = "add(i0,i0)"
    assert all(_reachable_key(r.candidate.dag) != self_seq for r in result.replacements)


def test_zero_input_block_gets_constant():
    b = block_of(("sub", ("mul", C(158), C(160)), C(16)), 0)
    cfg = SynthesisConfig(max_size=1, vocabulary=Vocabulary.of("add", "const"))
    result = synthesize_replacements(b, cfg, FAST_CHECKER)
    assert result.replacements, "constant inference must produce a verified replacement"
    first = result.replacements[0]
    assert first.candidate.index == -1
    assert first.tier == "verified"
    assert first.candidate.dag.nodes[first.candidate.dag.root].value == 25264


def test_replacement_cap_stops_early():
    b = block_of(("mul", IN(0), C(2)), 1)
    cfg = SynthesisConfig(max_size=2, max_replacements=2)
    result = synthesize_replacements(b, cfg, FAST_CHECKER)
    assert result.stopped == "cap"
    assert len(result.replacements) == 2


def test_budget_exhaustion_flagged():
    b = block_of(("mul", IN(0), C(2)), 1)
    cfg = SynthesisConfig(max_size=3, budget_seconds=1e-4, max_replacements=10**9)
    result = synthesize_replacements(b, cfg, FAST_CHECKER)
    assert result.stopped == "budget"


def test_oversized_block_skipped():
    b = block_of(("mul", IN(0), C(2)), 1)
    cfg = SynthesisConfig(max_block_nodes=2)
    result = synthesize_replacements(b, cfg, FAST_CHECKER)
    assert result.stopped == "skipped"
    assert result.replacements == []


def test_determinism_and_budget_prefix():
    b = block_of(("mul", IN(0), C(2)), 1)
    cfg = SynthesisConfig(max_size=2, max_replacements=12, seed=7)
    r1 = synthesize_replacements(b, cfg, FAST_CHECKER)
    r2 = synthesize_replacements(b, cfg, FAST_CHECKER)
    assert [x.candidate for x in r1.replacements] == [x.candidate for x in r2.replacements]
    # a smaller budget yields a prefix of the larger run's result list
    small = synthesize_replacements(
        b, SynthesisConfig(max_size=2, max_replacements=12, seed=7, budget_seconds=0.002),
        FAST_CHECKER,
    )
    ks = [x.candidate for x in small.replacements]
    assert ks == [x.candidate for x in r1.replacements][: len(ks)]


def test_rechecking_stored_replacements_is_stable():
    b = block_of(("gt_s", IN(0), C(10)), 1)
    cfg = SynthesisConfig(max_size=1, max_replacements=8)
    result = synthesize_replacements(b, cfg, FAST_CHECKER)
    assert result.replacements
    for r in result.replacements:
        again = check(b, r.candidate.dag, FAST_CHECKER)
        assert again.tier == r.tier


def test_listing_style_end_to_end_blocks(mul_add_module):
    blocks = extract_module_blocks(mul_add_module)
    b = next(x for x in blocks if x.dag.nodes[x.dag.root].op == "add")
    cfg = SynthesisConfig(max_size=2, vocabulary=Vocabulary.of("shl", "add", "mul", "const"))
    result = synthesize_replacements(b, cfg, FAST_CHECKER)
    keys = {_reachable_key(r.candidate.dag) for r in result.replacements}
    assert "mul(i0,c3)" in keys  # 3x in one op
    assert any("shl" in k for k in keys)
