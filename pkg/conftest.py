"""Configure Django before test collection so the suite runs under pytest."""

import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")
django.setup()
