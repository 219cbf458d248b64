from __future__ import annotations

import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

TC = """\
path(x, y) :- edge(x, y).
path(x, z) :- path(x, y), edge(y, z).
"""

CHAIN = 'edge("a", "b").\nedge("b", "c").\nedge("c", "d").\n'


@pytest.fixture
def tc_chain():
    from carapace.frontend import parse

    return parse(TC + CHAIN)
