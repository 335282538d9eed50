"""fprig: a desk-scale first-person recording rig.

Sensor simulation, stream ingestion, derived-signal analysis, tamper-evident
segment chaining, descriptive experience sampling, and an arousal experiment
harness.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    SegmentFile,
    Session,
    SessionConfig,
    SessionManifest,
    load_session,
    parse_segment,
    serialize_segment,
    timeline_query,
    validate_segment,
)
