import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dataplan.engine import Engine

FIXTURES = Path(__file__).parent.parent / "fixtures"

BAY_AREA_QUESTION = "What are data scientist jobs suitable for me in the bay area?"
USER_QUESTION = "what jobs are suitable for me?"
USER_ANSWER = {"min_salary": 150000}


def build_engine() -> Engine:
    config = json.loads((FIXTURES / "config.json").read_text())
    engine = Engine(config, base_dir=FIXTURES)
    engine.sync_all()
    return engine


@pytest.fixture
def engine() -> Engine:
    return build_engine()
