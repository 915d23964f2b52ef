#!/usr/bin/env python3
"""Entry point for running spikeflow from a source checkout."""

from spikeflow.cli import app

if __name__ == "__main__":
    app()
