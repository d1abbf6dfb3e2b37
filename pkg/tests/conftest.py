from __future__ import annotations

import pytest

from skillgraph import corpus
from skillgraph.library import parse_library
from skillgraph.orchestrator import RuntimeConfig


@pytest.fixture(scope="session")
def household():
    return corpus.household_library()


@pytest.fixture(scope="session")
def lab_library():
    return parse_library(corpus.lab_library_doc())


@pytest.fixture(scope="session")
def pipeline_library():
    return parse_library(corpus.pipeline_library_doc())


@pytest.fixture(scope="session")
def distractor_library():
    return parse_library(corpus.distractor_library_doc())


@pytest.fixture()
def config():
    return RuntimeConfig()


@pytest.fixture()
def potato():
    return corpus.potato_scenario()
