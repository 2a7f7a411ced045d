"""Skill timeline segmentation: pose ingestion, frame classifier, temporal segmenters and evaluation."""
