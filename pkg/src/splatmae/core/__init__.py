"""Run configuration, orchestration and report export."""
