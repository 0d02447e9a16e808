"""Re-identification of 3D point clusters with unscented descriptor tolerances."""

__version__ = "0.1.0"
