"""Per-layer hidden-state dumps of speech models, as MTX1 feature files.

Representations are extracted causally: at every stride position the
model sees only the trailing window of audio, and the final frame of
each layer's hidden sequence is recorded.  Bidirectional models
therefore never leak future context into a feature row.
"""

__version__ = "0.1.0"
