import time
from dataclasses import dataclass

import pytest

# The doubling example: f(x) = 2*x + x, main() = f(10) = 30.
MUL_ADD_TEXT = """\
(module
  (type (;0;) (func (param i32) (result i32)))
  (type (;1;) (func (result i32)))
  (func (;0;) (type 0) (param i32) (result i32)
    local.get 0
    local.get 0
    i32.const 2
    i32.mul
    i32.add)
  (func (;1;) (type 1) (result i32)
    i32.const 10
    call 0)
  (export "main" (func 1)))
"""


@pytest.fixture
def mul_add_text():
    return MUL_ADD_TEXT


@pytest.fixture
def mul_add_module():
    from crow.wat import parse_module

    return parse_module(MUL_ADD_TEXT)


@dataclass
class CorpusRun:
    name: str
    module: object
    result: object  # pipeline.DiversifyResult


@dataclass
class CorpusRuns:
    runs: dict
    wall_seconds: float


@pytest.fixture(scope="session")
def corpus_runs():
    """Full `diversify` over every bundled program under the default
    configuration; shared by the corpus-level acceptance criteria."""
    from crow import corpus
    from crow.pipeline import RunConfig, diversify
    from crow.wat import parse_module

    t0 = time.perf_counter()
    runs = {}
    for name in corpus.names():
        module = parse_module(corpus.load(name))
        runs[name] = CorpusRun(name, module, diversify(module, RunConfig()))
    return CorpusRuns(runs=runs, wall_seconds=time.perf_counter() - t0)
