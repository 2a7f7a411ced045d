"""Calisthenics skill temporal segmentation from per-frame body pose."""
