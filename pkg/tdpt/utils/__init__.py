"""Shared utilities: parallel maps, serialization, logging setup."""
