"""Backend tasks: testing, gradient checks, synthetic data and training experiments."""

from __future__ import annotations

from invoke import task

from .shared import EXPERIMENTS_DIR, execute_command

COVERAGE = "--cov=backend/gleason_seg --cov-report=term-missing --cov-report=xml"


@task
def test_unit(ctx, parallel=False):
    """Run unit tests (slow-marked tests excluded)."""
    workers = " -n auto" if parallel else ""
    execute_command(ctx, f"pytest tests/unit/ -m 'not slow' {COVERAGE}{workers}")


@task
def test_integration(ctx):
    """Run CLI pipeline tests on temporary synthetic datasets."""
    execute_command(ctx, "pytest tests/integration/ --timeout=600")


@task
def test_e2e(ctx):
    """Run the overfit experiments (several minutes on a desktop CPU)."""
    execute_command(ctx, "pytest tests/e2e/ -m e2e --timeout=1800")


@task
def test_all(ctx):
    """Run all tests including slow ones."""
    execute_command(ctx, f"pytest tests/ -n auto {COVERAGE}")


@task
def gradcheck(ctx, op="", arch="", seed=0):
    """Run the registered finite-difference gradient checks (all, or one op / architecture)."""
    cmd = f"gleason-seg gradcheck --seed {seed}"
    if op:
        cmd += f" --op {op}"
    if arch:
        cmd += f" --arch {arch}"
    execute_command(ctx, cmd)


@task
def synth(ctx, count=8, size=32, seed=7, test_fraction=0.0):
    """Generate the synthetic dataset under experiments/data (all training by default)."""
    execute_command(
        ctx,
        f"gleason-seg synth --count {count} --size {size} --seed {seed} --test-fraction {test_fraction} "
        f"--out {EXPERIMENTS_DIR}/data",
    )


@task
def train(ctx, arch="tiny-unet", manifest="", epochs=10, out=""):
    """Train ARCH on a manifest's training split (defaults to the synthetic dataset)."""
    manifest = manifest or str(EXPERIMENTS_DIR / "data" / "manifest.tsv")
    out = out or str(EXPERIMENTS_DIR / f"{arch}.sgck")
    execute_command(ctx, f"gleason-seg train --arch {arch} --manifest {manifest} --epochs {epochs} --out {out}")


@task(pre=[synth])
def overfit(ctx, arch="tiny-resunet", epochs=75):
    """Train a tiny model on the synthetic training split and evaluate it on the same images."""
    data = EXPERIMENTS_DIR / "data" / "manifest.tsv"
    model = EXPERIMENTS_DIR / f"{arch}.sgck"
    execute_command(ctx, f"gleason-seg train --arch {arch} --manifest {data} --epochs {epochs} --out {model}")
    execute_command(
        ctx,
        f"gleason-seg eval --model {model} --manifest {data} --split train "
        f"--metrics-out {EXPERIMENTS_DIR}/{arch}.metrics.csv",
    )


@task
def typecheck(ctx):
    """Run mypy type checking on backend."""
    execute_command(ctx, "mypy backend/", warn=True)
