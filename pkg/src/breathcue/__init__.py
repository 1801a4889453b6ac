"""Breath-cue gated dual-branch audio deepfake detection at desk scale."""

__version__ = "0.1.0"
