from __future__ import annotations

import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from mswasm.corpus import load_corpus
from mswasm.ir import FuncDef, ModuleDef, ins

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "corpus"
COMPONENTS = ROOT / "components"
MSWAT = sorted((CORPUS / "mswat").glob("*.mswat"))

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def module(body, results=(), locals_=(), params=(), mid="m", name="main"):
    """A one-function module with an exported ``main``."""
    return ModuleDef(mid, (FuncDef(name, tuple(params), tuple(results), tuple(locals_),
                                   tuple(body), True),))


def I(op, arg=None, **kw):
    return ins(op, arg, **kw)


@pytest.fixture(scope="session")
def corpus_entries():
    return load_corpus(CORPUS)


@pytest.fixture(scope="session")
def bug_entries(corpus_entries):
    return [e for e in corpus_entries if e.is_bug]


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
