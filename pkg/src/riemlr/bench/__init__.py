"""Synthetic benchmarks, invariant suites and the command-line harness."""
