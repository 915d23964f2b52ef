"""spikeflow - spiking optical-flow simulator for event cameras on crossbar-core fabrics."""

__version__ = "0.3.0"
