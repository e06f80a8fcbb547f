import itertools

import pytest

from musicagent.artifacts import ArtifactStore
from musicagent.gateway import Config, MusicAgent
from musicagent.llm import MockLlm
from musicagent.taxonomy import TaskRegistry


@pytest.fixture
def tasks():
    return TaskRegistry.seeded()


@pytest.fixture
def tick_clock():
    """Deterministic injectable clock: 1.0, 2.0, 3.0, ..."""
    counter = itertools.count(1)
    return lambda: float(next(counter))


@pytest.fixture
def store(tmp_path, tick_clock):
    return ArtifactStore("test-session", tmp_path / "artifacts", clock=tick_clock)


@pytest.fixture
def make_agent(tmp_path, tick_clock):
    """Factory: make_agent(script) -> MusicAgent with a scripted mock LLM."""
    made = itertools.count()

    def factory(script=None, config=None, clock=None):
        n = next(made)
        cfg = config or Config()
        cfg.paths.artifacts_dir = str(tmp_path / f"artifacts{n}")
        cfg.paths.sessions_dir = str(tmp_path / f"sessions{n}")
        backend = MockLlm(script) if script is not None else None
        return MusicAgent(cfg, llm_backend=backend, clock=clock or tick_clock)

    return factory
