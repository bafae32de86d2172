"""Timelike maximal surfaces from planar initial data."""
