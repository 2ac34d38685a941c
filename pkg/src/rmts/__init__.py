"""Real-time multi-object tracking for aerial video streams.

Detections come in as data (files or wire frames), per-stream tracker
workers run BYTE or BoT-SORT association over them, and an evaluator scores
the output with CLEAR, IDF1 and HOTA.
"""

__version__ = "0.1.0"

from .core import AffineTransform, BBox, Detection, FrameInput  # noqa: F401
from .tracker import (  # noqa: F401
    FrameOutput,
    TrackerConfig,
    TrackerState,
    new_state,
    step,
    track_sequence,
)
