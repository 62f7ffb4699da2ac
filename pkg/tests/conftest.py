import sys

import numpy as np
import pytest

from secnn.data import gen_synthetic


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Two classes, 20 images each, 32x32."""
    root = tmp_path_factory.mktemp("synth2")
    gen_synthetic(root, num_classes=2, per_class=20, image_size=32, seed=0)
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"ACCEPTANCE {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
