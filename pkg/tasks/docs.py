"""Documentation tasks: YAML and Markdown linting."""

from __future__ import annotations

from invoke import task

from .shared import execute_command


@task
def lint_yaml(ctx):
    """Lint YAML files (architecture presets)."""
    execute_command(ctx, "yamllint backend/")


@task
def lint_markdown(ctx):
    """Lint Markdown files."""
    execute_command(ctx, "npx markdownlint-cli2 '**/*.md' '#examples' '#.venv'", warn=True)


@task(pre=[lint_yaml, lint_markdown])
def lint_all(ctx):
    """Run all documentation linters."""
    print("All documentation lints complete.")
