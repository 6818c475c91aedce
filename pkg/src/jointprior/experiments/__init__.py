"""Experiment drivers behind the command-line subcommands."""
