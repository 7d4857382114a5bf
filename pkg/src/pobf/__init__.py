"""Batch data engine for paint-outside-the-box visual grounding data.

Stages: candidate generation (inpaint outside annotated boxes), teacher
scoring (hardness / overfitting / image-prior), per-sample selection, and
real+synthetic dataset mixing, plus evaluation and reporting utilities.
"""

__version__ = "0.1.0"
