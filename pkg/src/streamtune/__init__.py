"""Learned stream-configuration tuning over a simulated offload pipeline."""

