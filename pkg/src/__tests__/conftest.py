import numpy as np
import pytest

from src.__tests__.network_factory import arc_entry, network_document, single_arc_document, star3_document, transmission_entry
from src.tools.network import parse_network


@pytest.fixture
def star3():
    """Reference star: a1, a2 into N, a3 out of N, unit coefficients."""
    return parse_network(star3_document())


@pytest.fixture
def sealed_arc():
    return parse_network(single_arc_document())


@pytest.fixture
def two_arc_node():
    """a1: E1 -> N (incoming), a2: N -> E2 (outgoing), K = alpha = 1."""
    text = network_document(
        ["N"],
        ["E1", "E2"],
        [arc_entry("a1", "E1", "N"), arc_entry("a2", "N", "E2")],
        [transmission_entry("N", ["a1", "a2"], [[0, 1], [1, 0]])],
    )
    return parse_network(text)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
