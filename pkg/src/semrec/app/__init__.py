"""Command-line pipeline and HTTP serving layer."""
