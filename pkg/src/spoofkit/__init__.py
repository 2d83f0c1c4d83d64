"""Evaluation, calibration, augmentation and localization scoring for fake audio detection."""

__version__ = "0.1.0"
FORMAT_VERSION = "1"
