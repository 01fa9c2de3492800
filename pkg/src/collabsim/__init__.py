"""collabsim: deterministic multi-agent household-collaboration simulator,
temporal task-evaluation engine, and benchmark harness."""

__version__ = "0.1.0"
