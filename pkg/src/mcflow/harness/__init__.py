"""Run orchestration: configuration, scenario library, persistence, CLI."""
