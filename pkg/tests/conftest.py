import numpy as np
import pytest

from longadapt.dataset import load_manifest
from longadapt.preprocess import preprocess_study
from longadapt.synthgen import SynthConfig, generate_study


def pair_count_auroc(scores, labels):
    """Brute-force P(pos > neg) + 0.5 P(tie) over every positive/negative pair."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    wins = 0.0
    for a in pos:
        for b in neg:
            wins += 1.0 if a > b else 0.5 if a == b else 0.0
    return wins / (pos.size * neg.size)


def make_study(tmp, **kw):
    cfg = SynthConfig(**kw)
    generate_study(cfg, tmp)
    return cfg, preprocess_study(load_manifest(tmp / "manifest.json"))


@pytest.fixture(scope="session")
def small_study(tmp_path_factory):
    """3 participants with (3, 2, 3) short sessions; cheap enough for protocol tests."""
    tmp = tmp_path_factory.mktemp("small_study")
    return make_study(tmp, n_participants=3, sessions_per_participant=(3, 2, 3), session_seconds=80.0,
                      n_visual=3, n_audio=1, n_game=1, seed=3)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
