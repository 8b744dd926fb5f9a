import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20211014)


@pytest.fixture(scope="session")
def synth_tree(tmp_path_factory):
    """Factory for cached synthetic PNG trees keyed by their generator arguments."""
    from whtpack.dataset import generate_synthetic

    cache = {}

    def make(classes=4, per_class=10, size=64, seed=0, variant="textures"):
        key = (classes, per_class, size, seed, variant)
        if key not in cache:
            root = tmp_path_factory.mktemp("synth")
            generate_synthetic(root, classes=classes, per_class=per_class, size=size, seed=seed, variant=variant)
            cache[key] = root
        return cache[key]

    return make


def pytest_terminal_summary(terminalreporter):
    import acceptance_report

    if acceptance_report.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acceptance_report.LINES):
            terminalreporter.write_line(acceptance_report.LINES[n])
