"""Sweep configuration, execution and reporting."""
