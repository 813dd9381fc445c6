from __future__ import annotations

from pathlib import Path

import pytest

from bpmnkit.embeddings import HashingEmbedder
from bpmnkit.xmlio import BpmnDocument, parse

FIXTURES = Path(__file__).parent / "fixtures"

ALL_FIXTURES = sorted(p.name for p in FIXTURES.glob("*.bpmn"))

CLEAN_FIXTURES = [
    "boundary.bpmn",
    "chain3.bpmn",
    "chain4.bpmn",
    "diamond.bpmn",
    "inclusive.bpmn",
    "loan-approval.bpmn",
    "order-v1.bpmn",
    "order-v2.bpmn",
    "parallel.bpmn",
    "unicode.bpmn",
]


def fixture_path(name: str) -> Path:
    return FIXTURES / name


def fixture_bytes(name: str) -> bytes:
    return fixture_path(name).read_bytes()


def load_doc(name: str) -> BpmnDocument:
    return parse(fixture_bytes(name))


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def embedder() -> HashingEmbedder:
    return HashingEmbedder()
