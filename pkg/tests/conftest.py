import numpy as np
import pytest

from pier.corpus import generate
from pier.training import TrainConfig, train_stage

from helpers import ACCEPTANCE_LINES, TINY


@pytest.fixture(scope="session")
def small_corpus():
    return generate(3, n_pies=12, n_groups=4, n_train=400, n_test=120, n_pie_free=40)


@pytest.fixture(scope="session")
def tiny_stages(small_corpus, tmp_path_factory):
    """Base and adapter checkpoints of a tiny model trained briefly on the small corpus."""
    d = tmp_path_factory.mktemp("stages")
    base_cfg = TrainConfig(stage="base", epochs=1, batch_size=32, lr=3e-3, model=TINY, out=str(d / "base.ckpt"))
    base = train_stage("base", base_cfg, small_corpus)
    ad_cfg = TrainConfig(stage="adapter", epochs=1, batch_size=32, lr=3e-3, prompts=(), model=TINY,
                         out=str(d / "adapter.ckpt"))
    adapter = train_stage("adapter", ad_cfg, small_corpus, init=base.checkpoint_path)
    return {"dir": d, "base": base, "adapter": adapter}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
