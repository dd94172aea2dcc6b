import os
import random
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "helpers"))

CORPUS = os.path.join(os.path.dirname(__file__), "..", "corpus")
FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def rng():
    return random.Random(20240817)


def corpus_path(name: str) -> str:
    return os.path.join(CORPUS, name)


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)
