from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_teacher():
    from glossnmt.synthetic import generate_text
    from glossnmt.teacher import pretrain_teacher, teacher_config

    sents = generate_text(120, seed=5)
    vocab_size = len({t for s in sents for t in s}) + 4
    cfg = teacher_config(vocab_size, d_model=16, d_ff=32, n_heads=2, n_enc_layers=1)
    return pretrain_teacher(sents, cfg, epochs=2, seed=0)


@pytest.fixture(scope="session")
def tiny_corpus():
    from glossnmt.synthetic import generate_synthetic

    return generate_synthetic(24, gloss_vocab_size=12, text_vocab_size=30, seed=3)


# -- acceptance reporting ------------------------------------------------------------

ACCEPTANCE_COUNT = 10
_acceptance: dict[int, tuple[bool, str]] = {}
_acceptance_seen = False


@pytest.fixture
def acceptance():
    """Record one criterion's verdict, print it, then fail the test if it did not hold."""
    global _acceptance_seen
    _acceptance_seen = True

    def record(n: int, ok: bool, detail: str) -> None:
        _acceptance[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, f"criterion {n}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_seen:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, ACCEPTANCE_COUNT + 1):
        ok, detail = _acceptance.get(n, (False, "(not run or raised before reporting)"))
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
