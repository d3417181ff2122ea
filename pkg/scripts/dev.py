#!/usr/bin/env python3
"""Development scripts for ncdetect."""

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).parent.parent
DEMO_WORLD = ROOT / "runs" / "demo-world"


def install_deps():
    """Install all dependencies."""
    print("Installing Python dependencies with uv...")
    subprocess.run(["uv", "sync"])


def run_tests(extra=None):
    """Run the test suite; pass 'fast' to skip acceptance runs."""
    print("Running engine tests...")
    command = ["uv", "run", "pytest", "engine/tests/"]
    if extra == "fast":
        command += ["-m", "not acceptance"]
    subprocess.run(command)


def lint():
    """Run linting."""
    print("Running linting...")
    subprocess.run(["uv", "run", "ruff", "check", "engine/"])


def synth():
    """Generate the demo synthetic world."""
    print(f"Generating synthetic world in {DEMO_WORLD}...")
    subprocess.run(["uv", "run", "ncdetect", "synth", str(DEMO_WORLD)])


def pipeline():
    """Run the full pipeline on the demo world."""
    config = DEMO_WORLD / "config.yaml"
    if not config.exists():
        synth()
    subprocess.run(["uv", "run", "ncdetect", "pipeline", "--config", str(config), "--q", "50"])


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print("Usage: uv run scripts/dev.py [install|test|lint|synth|pipeline]")
        sys.exit(1)

    command = sys.argv[1]

    if command == "install":
        install_deps()
    elif command == "test":
        run_tests(sys.argv[2] if len(sys.argv) > 2 else None)
    elif command == "lint":
        lint()
    elif command == "synth":
        synth()
    elif command == "pipeline":
        pipeline()
    else:
        print(f"Unknown command: {command}")
        sys.exit(1)
