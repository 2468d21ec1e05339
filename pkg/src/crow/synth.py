"""Enumerative synthesis of candidate replacements for pure blocks.

Candidates are operator trees enumerated by iterative deepening on op count,
in a fixed canonical order (ops in vocabulary order, operand size splits with
the left subtree largest first, operand choices rightmost-fastest). No cost
or dataflow pruning is applied; every candidate that survives the test-vector
prefilter goes to the equivalence checker, and every non-rejected candidate
is kept.

Budgets are deterministic: the configured per-block seconds convert to a
fixed number of work units (one unit ~ one vector evaluation of one
candidate), so results depend only on (block, config, seed), never on wall
clock or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import equiv
from .emit import emit_dag
from .equiv import CheckerConfig, InfeasibleDomainError, batch_apply, batch_eval
from .ir import Dag, DagNode, K_CONST, K_INPUT, PURE_OPS, PureBlock, _reachable_key
from .wat import wrap_i32

# Work-unit conversion for the deterministic time budget. Calibrated on a
# mid-range core: one unit is one candidate-vector evaluation.
WORK_UNITS_PER_SECOND = 8_000_000

CANDIDATE_OPS = tuple(PURE_OPS)  # canonical order

CORNER_VALUES = (0, 1, -1, 2, 10, 2**31 - 1, -(2**31))
CORNER_CAP = 512


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Instruction set permitted in candidates; `const` gates constant leaves."""

    ops: tuple[str, ...]
    allow_const: bool = True

    @classmethod
    def of(cls, *names: str) -> "Vocabulary":
        names_set = set(names)
        allow_const = "const" in names_set
        names_set.discard("const")
        unknown = names_set - set(CANDIDATE_OPS)
        if unknown:
            raise ConfigError(f"not pure candidate ops: {sorted(unknown)}")
        ops = tuple(op for op in CANDIDATE_OPS if op in names_set)
        if not ops and not allow_const:
            raise ConfigError("vocabulary is empty")
        return cls(ops=ops, allow_const=allow_const)

    @classmethod
    def default(cls) -> "Vocabulary":
        return cls(ops=CANDIDATE_OPS, allow_const=True)

    @classmethod
    def parse(cls, csv: str) -> "Vocabulary":
        return cls.of(*[p.strip() for p in csv.split(",") if p.strip()])


@dataclass(frozen=True)
class SynthesisConfig:
    max_size: int = 3  # op nodes per candidate; hard cap 50
    vocabulary: Vocabulary = field(default_factory=Vocabulary.default)
    pool_base: tuple[int, ...] = (0, 1, 2, -1)
    prefilter_random: int = 64  # R
    seed: int = 0
    budget_seconds: float = 60.0
    max_block_nodes: int = 64  # larger blocks are recorded but not synthesized
    max_replacements: int = 24  # deterministic early stop per block

    def validate(self) -> list[str]:
        errs = []
        if not 1 <= self.max_size <= 50:
            errs.append("max candidate size must lie in 1..50")
        if self.prefilter_random < 1:
            errs.append("prefilter vector count must be >= 1")
        if not self.vocabulary.ops and not self.vocabulary.allow_const:
            errs.append("vocabulary is empty")
        if self.budget_seconds <= 0:
            errs.append("budget must be positive")
        return errs


@dataclass(frozen=True)
class Candidate:
    dag: Dag
    index: int  # enumeration position; -1 for the constant-inference candidate


@dataclass(frozen=True)
class Replacement:
    block_id: str
    candidate: Candidate
    tier: str  # 'verified' | 'probable'
    method: str
    emitted_len: int


@dataclass
class BlockSynthesis:
    block: PureBlock
    replacements: list[Replacement] = field(default_factory=list)
    candidates_seen: int = 0
    work_units: int = 0
    stopped: str = "complete"  # 'complete' | 'budget' | 'cap' | 'skipped'
    skipped_reason: str | None = None


def constant_pool(b: PureBlock, cfg: SynthesisConfig) -> tuple[int, ...]:
    """Base constants plus the block's own immediates, their neighbors, and
    their negations (the last reaches subtract-a-negative rewrites)."""
    pool = set(cfg.pool_base)
    for n in b.dag.nodes:
        if n.kind == K_CONST:
            pool.update((n.value, n.value + 1, n.value - 1, -n.value))
    return tuple(sorted(wrap_i32(v) for v in pool))


# --- canonical tree enumeration ------------------------------------------------
# A tree is either a leaf index (int) or (op, subtree, ...).


def _splits(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _splits(total - first, parts - 1):
            yield (first, *rest)


def _trees(k: int, n_leaves: int, ops: tuple[str, ...]):
    if k == 0:
        yield from range(n_leaves)
        return
    for op in ops:
        arity = PURE_OPS[op]
        for sizes in _splits(k - 1, arity):
            yield from _combine(op, sizes, n_leaves, ops)


def _combine(op: str, sizes, n_leaves: int, ops, prefix=()):
    if not sizes:
        yield (op, *prefix)
        return
    for child in _trees(sizes[0], n_leaves, ops):
        yield from _combine(op, sizes[1:], n_leaves, ops, prefix + (child,))


def _tree_key(tree, leaves) -> str:
    if isinstance(tree, int):
        kind, v = leaves[tree]
        return f"c{v}" if kind == "const" else f"i{v}"
    return tree[0] + "(" + ",".join(_tree_key(t, leaves) for t in tree[1:]) + ")"


def _tree_to_dag(tree, leaves) -> Dag:
    nodes: list[DagNode] = []

    def walk(t) -> int:
        if isinstance(t, int):
            kind, v = leaves[t]
            if kind == "const":
                nodes.append(DagNode(K_CONST, value=v))
            else:
                nodes.append(DagNode(K_INPUT, input=v))
        else:
            ids = tuple(walk(c) for c in t[1:])
            nodes.append(DagNode("op", op=t[0], operands=ids))
        return len(nodes) - 1

    root = walk(tree)
    return Dag(tuple(nodes), root)


def _tree_eval(tree, leaf_arrays, width: int = 32):
    if isinstance(tree, int):
        return leaf_arrays[tree]
    return batch_apply(tree[0], [_tree_eval(t, leaf_arrays, width) for t in tree[1:]], width)


def _tree_eval_scalar(tree, leaves) -> int:
    """Evaluates a candidate tree over constant leaves without building a
    DAG; keeps zero-input enumeration cheap. Returns the unsigned value."""
    if isinstance(tree, int):
        return leaves[tree][1] & 0xFFFFFFFF
    args = [_tree_eval_scalar(t, leaves) for t in tree[1:]]
    args += [0] * (3 - len(args))
    return equiv.scalar_op(tree[0], args[0], args[1], args[2], 32)


def _leaves_for(b: PureBlock, cfg: SynthesisConfig):
    """Leaf catalogue: block inputs first, then pool constants ascending."""
    leaves = [("input", i) for i in range(len(b.inputs))]
    if cfg.vocabulary.allow_const:
        leaves.extend(("const", v) for v in constant_pool(b, cfg))
    return leaves


def enumerate_candidates(b: PureBlock, cfg: SynthesisConfig):
    """Ordered candidate stream: sizes 1..max over the vocabulary, excluding
    anything structurally identical to the block's own DAG."""
    errs = cfg.validate()
    if errs:
        raise ConfigError("; ".join(errs))
    leaves = _leaves_for(b, cfg)
    self_key = _reachable_key(b.dag)
    index = 0
    for k in range(1, cfg.max_size + 1):
        for tree in _trees(k, len(leaves), cfg.vocabulary.ops):
            if _tree_key(tree, leaves) == self_key:
                continue
            yield Candidate(_tree_to_dag(tree, leaves), index)
            index += 1


# --- prefiltering ----------------------------------------------------------------


def prefilter_vectors(b: PureBlock, cfg: SynthesisConfig):
    """Corner-value combinations (capped) plus R seeded random vectors, as
    uint64 arrays, one per block input."""
    n = len(b.inputs)
    if n == 0:
        return []
    corners = [wrap_i32(v) & 0xFFFFFFFF for v in CORNER_VALUES]
    combos = min(len(corners) ** n, CORNER_CAP)
    cols = [[] for _ in range(n)]
    for idx in range(combos):
        rest = idx
        for j in range(n - 1, -1, -1):
            cols[j].append(corners[rest % len(corners)])
            rest //= len(corners)
    seed = equiv._stable_seed("prefilter", cfg.seed, b.dag.key())
    rand = equiv.random_vectors(n, cfg.prefilter_random, seed)
    return [
        np.concatenate([np.array(col, dtype=np.uint64), rand[j]])
        for j, col in enumerate(cols)
    ]


def prefilter(b: PureBlock, c: Candidate, vectors) -> bool:
    """True iff block and candidate agree on every vector. Never rejects a
    truly equivalent candidate: agreement is implied by equivalence."""
    dag = c.dag if isinstance(c, Candidate) else c
    if not vectors:
        return equiv.eval_dag(b.dag, (), 32) == equiv.eval_dag(dag, (), 32)
    lv = batch_eval(b.dag, vectors, 32)
    rv = np.atleast_1d(batch_eval(dag, vectors, 32))
    return bool(np.all(lv == rv))


def infer_constant(b: PureBlock, cfg: SynthesisConfig) -> Candidate | None:
    """Proposes const(v) when the block evaluates to the same v on every
    prefilter vector (always, for zero-input blocks). Still subject to the
    full equivalence check downstream."""
    if len(b.inputs) == 0:
        v = equiv.eval_dag(b.dag, (), 32)
    else:
        vals = np.atleast_1d(batch_eval(b.dag, prefilter_vectors(b, cfg), 32))
        if not bool(np.all(vals == vals[0])):
            return None
        v = int(vals[0])
        v = v - 2**32 if v > 2**31 - 1 else v
    return Candidate(Dag((DagNode(K_CONST, value=v),), 0), -1)


# --- the synthesis loop -----------------------------------------------------------


def synthesize_replacements(
    b: PureBlock,
    cfg: SynthesisConfig,
    checker: CheckerConfig,
    budget_seconds: float | None = None,
) -> BlockSynthesis:
    """Collects every candidate the checker does not reject, in stream order,
    until enumeration completes, the replacement cap is hit, or the
    deterministic work budget runs out."""
    errs = cfg.validate()
    if errs:
        raise ConfigError("; ".join(errs))
    result = BlockSynthesis(block=b)
    if b.node_count > cfg.max_block_nodes:
        result.stopped = "skipped"
        result.skipped_reason = f"block has {b.node_count} nodes (> {cfg.max_block_nodes})"
        return result

    seconds = cfg.budget_seconds if budget_seconds is None else budget_seconds
    quota = max(int(seconds * WORK_UNITS_PER_SECOND), 1)
    leaves = _leaves_for(b, cfg)
    self_key = _reachable_key(b.dag)
    vectors = prefilter_vectors(b, cfg)
    n_vec = len(vectors[0]) if vectors else 1
    charge = max(n_vec, 16)  # floor covers per-candidate bookkeeping cost
    block_vals = np.atleast_1d(batch_eval(b.dag, vectors, 32)) if vectors else None
    block_scalar = (
        equiv.eval_dag(b.dag, (), 32) & 0xFFFFFFFF if not vectors else None
    )

    leaf_arrays = [
        vectors[v] if kind == "input" else np.uint64(v & 0xFFFFFFFF)
        for kind, v in leaves
    ] if vectors else []

    def consider(candidate_dag: Dag | None, tree, index: int) -> bool:
        """Prefilter then check one candidate; False means stop the loop."""
        result.candidates_seen += 1
        result.work_units += charge
        if result.work_units > quota:
            result.stopped = "budget"
            return False
        if vectors:
            cv = np.atleast_1d(
                _tree_eval(tree, leaf_arrays) if tree is not None
                else batch_eval(candidate_dag, vectors, 32)
            )
            if not bool(np.all(cv == block_vals)):
                return True
        elif tree is not None and _tree_eval_scalar(tree, leaves) != block_scalar:
            return True
        dag = candidate_dag if candidate_dag is not None else _tree_to_dag(tree, leaves)
        if not vectors and (equiv.eval_dag(dag, (), 32) & 0xFFFFFFFF) != block_scalar:
            return True
        try:
            verdict = equiv.check(b, dag, checker)
        except InfeasibleDomainError:
            return True
        result.work_units += verdict.evals
        if verdict.tier == equiv.TIER_REJECTED:
            return True
        result.replacements.append(
            Replacement(
                block_id=b.id,
                candidate=Candidate(dag, index),
                tier=verdict.tier,
                method=verdict.method,
                emitted_len=len(emit_dag(dag)),
            )
        )
        if len(result.replacements) >= cfg.max_replacements:
            result.stopped = "cap"
            return False
        return True

    inferred = infer_constant(b, cfg)
    if inferred is not None and _reachable_key(inferred.dag) != self_key:
        if not consider(inferred.dag, None, -1):
            return result

    index = 0
    for k in range(1, cfg.max_size + 1):
        for tree in _trees(k, len(leaves), cfg.vocabulary.ops):
            if _tree_key(tree, leaves) == self_key:
                continue
            if not consider(None, tree, index):
                return result
            index += 1
    return result
