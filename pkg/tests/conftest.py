from importlib import resources

import pytest

from pmederive.invariants import generate_invariants
from pmederive.opspec import load_spec

CORPUS = resources.files("pmederive") / "corpus"


def corpus_spec(name: str):
    return load_spec(CORPUS / f"{name}.clk")


@pytest.fixture(scope="session")
def lu_spec():
    return corpus_spec("lu")


@pytest.fixture(scope="session")
def sylv_spec():
    return corpus_spec("coupled_sylvester")


@pytest.fixture(scope="session")
def lu_derivation(lu_spec):
    return generate_invariants(lu_spec)


@pytest.fixture(scope="session")
def sylv_derivation(sylv_spec):
    return generate_invariants(sylv_spec)
