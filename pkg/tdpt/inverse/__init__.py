"""Inverse problem: FDPT/TDPT recovery, size/contrast/ellipse estimates and shape optimization."""
