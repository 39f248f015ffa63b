import pytest

from phaseflip.measurement import RngStream


@pytest.fixture
def rng(request):
    return RngStream(20250101, request.node.name)
