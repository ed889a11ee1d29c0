"""Root tasks: format, lint, scan, check-all."""

from __future__ import annotations

from invoke import task

from .shared import BACKEND_DIR, TESTS_DIR, execute_command

PY_TARGETS = f"{BACKEND_DIR} {TESTS_DIR} tasks"


@task
def format_code(ctx):
    """Format Python code with ruff (fixes first, then layout)."""
    execute_command(ctx, f"ruff check --fix {PY_TARGETS}")
    execute_command(ctx, f"ruff format {PY_TARGETS}")


@task
def lint(ctx):
    """Lint with ruff and type-check the package with mypy."""
    execute_command(ctx, f"ruff check {PY_TARGETS}")
    execute_command(ctx, f"ruff format --check {PY_TARGETS}")
    execute_command(ctx, f"mypy {BACKEND_DIR}/gleason_seg")


@task
def scan(ctx):
    """Run security scans (bandit + detect-secrets)."""
    execute_command(ctx, f"bandit -r {BACKEND_DIR} -c pyproject.toml", warn=True)
    execute_command(ctx, "detect-secrets scan --baseline .secrets.baseline", warn=True)


@task(pre=[lint, scan])
def check_all(ctx):
    """Lint, scan, then run the fast unit tests and the relu/conv gradient checks as a smoke test."""
    execute_command(ctx, "pytest tests/unit/ -m 'not slow' -q")
    for op in ("relu", "conv2d"):
        execute_command(ctx, f"gleason-seg gradcheck --op {op}")
