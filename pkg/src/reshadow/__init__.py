"""Randomized measurements under restricted control: visible-space operator
learning, kernel estimators, bias-variance optimization, adaptive sampling,
and the two desk-scale applications (gauge-theory energy density, topological
phase classification)."""

__version__ = "0.1.0"
