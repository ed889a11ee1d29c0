"""Command-line entry points and the registered gradient-check suite."""
