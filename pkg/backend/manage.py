#!/usr/bin/env python
"""Django's command-line utility; ``manage.py skillseg ...`` runs the pipeline."""
import os
import sys

def main():
    """Run administrative tasks."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Install backend/requirements.txt into the "
            "active environment before running the skillseg commands."
        ) from exc
    execute_from_command_line(sys.argv)

if __name__ == '__main__':
    main()
