"""Expectation-alignment intrinsic rewards for decentralized multi-agent RL."""

__version__ = "0.1.0"
