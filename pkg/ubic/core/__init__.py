"""Core infrastructure: settings, logging, pipeline orchestration and CLI."""
