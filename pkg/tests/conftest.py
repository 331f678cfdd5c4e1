from __future__ import annotations

import pytest

from stageflow.detector import CueLexicon
from stageflow.harness import default_personas_dir, load_personas
from stageflow.prompts import PromptTemplates


@pytest.fixture(scope="session")
def lexicon() -> CueLexicon:
    return CueLexicon.load_default()


@pytest.fixture(scope="session")
def templates() -> PromptTemplates:
    return PromptTemplates.load_default()


@pytest.fixture(scope="session")
def personas():
    return load_personas(default_personas_dir())
