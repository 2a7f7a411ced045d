"""Bridge module exposing the ``skillseg`` management command as a plain CLI."""

from __future__ import annotations

import os
import sys
from pathlib import Path
from typing import Optional, Sequence

# Ensure the Django project is on the import path when invoked from the repo root.
BACKEND_DIR = Path(__file__).resolve().parent.parent / "backend"
if str(BACKEND_DIR) not in sys.path:
    sys.path.insert(0, str(BACKEND_DIR))

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")

import django
from django.core.management import call_command
from django.core.management.base import CommandError

django.setup()


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one ``skillseg`` subcommand and return its exit status."""

    args = list(sys.argv[1:] if argv is None else argv)
    try:
        call_command("skillseg", *args)
    except CommandError as exc:
        sys.stderr.write(f"skillseg: {exc}\n")
        return exc.returncode
    return 0


def main() -> None:
    sys.exit(run())
