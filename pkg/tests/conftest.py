from __future__ import annotations

import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=None)
settings.load_profile("ci")


@pytest.fixture
def manager(tmp_path):
    from fprig.service import SessionManager

    return SessionManager(tmp_path / "data")


@pytest.fixture
def local_client(manager):
    from fprig.client import LocalIngestClient

    return LocalIngestClient(manager)
