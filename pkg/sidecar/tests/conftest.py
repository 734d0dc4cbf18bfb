"""Fixtures shared by the scoring-server tests."""
import pytest
from fastapi.testclient import TestClient

from model_sidecar import SidecarConfig, create_app

from wire import GOLDEN_DIR


@pytest.fixture
def mock_config() -> SidecarConfig:
    return SidecarConfig(
        mock_table=str(GOLDEN_DIR / "scorer_table.json"),
        mock_nli_table=str(GOLDEN_DIR / "nli_table.json"),
        template_path=str(GOLDEN_DIR / "template.json"),
        batch_cap=4,
    )


@pytest.fixture
def loaded_client(mock_config) -> TestClient:
    app = create_app(mock_config)
    app.state.service.load()
    return TestClient(app)
