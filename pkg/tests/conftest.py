import json
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def load_oracle(prefix: str = "") -> list[tuple[str, dict, object, float]]:
    rows = []
    for line in (FIXTURES / "oracle_values.txt").read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        name, inputs, expected, tol = line.split("\t")
        if name.startswith(prefix):
            rows.append((name, json.loads(inputs), json.loads(expected), float(tol)))
    return rows


def random_ball(rng, n, d, c, frac=0.9):
    u = rng.standard_normal((n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * rng.uniform(0.0, frac, (n, 1)) / np.sqrt(c)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
