"""Dual-path (MFCC/TDNN + raw-waveform transformer) voice pathology detector
with attentive frame-level fusion and two-stage training."""

__version__ = "0.1.0"
