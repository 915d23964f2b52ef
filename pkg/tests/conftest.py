import pytest
import tempfile
from pathlib import Path

from spikeflow.corenet import compile_flow_network
from spikeflow.events import SensorGeometry
from spikeflow.neuron import delay_config, ds_config, refractory_config


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmp_dir:
        yield Path(tmp_dir)


@pytest.fixture
def config_path(temp_dir):
    """Settings file location inside the temporary directory."""
    return temp_dir / ".spikeflow" / "config.json"


@pytest.fixture
def small_geometry():
    """An 8x8 sensor, two 4x4 tiles per axis."""
    return SensorGeometry(8, 8)


@pytest.fixture
def small_network(small_geometry):
    """Flow network for the 8x8 sensor without the relay layer."""
    return compile_flow_network(small_geometry, dx=4, dy=4, tau_r=60, tau_d=50, relay=False)


@pytest.fixture
def relay_network(small_geometry):
    """Flow network for the 8x8 sensor fed through the relay layer."""
    return compile_flow_network(small_geometry, dx=4, dy=4, tau_r=60, tau_d=50, relay=True)


@pytest.fixture
def refractory():
    return refractory_config(60)


@pytest.fixture
def delay():
    return delay_config(50)


@pytest.fixture
def ds():
    return ds_config()
