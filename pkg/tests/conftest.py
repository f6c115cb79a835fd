import pathlib

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "package",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("package")


@pytest.fixture(scope="session")
def oracle_cache_dir() -> pathlib.Path:
    """Persistent on-disk cache so repeated runs skip the big oracle draws."""
    path = pathlib.Path(__file__).parent / "_oracle_cache"
    path.mkdir(exist_ok=True)
    return path
