"""Experiment harness: link simulation, presets, delay/overhead models and CLI."""
