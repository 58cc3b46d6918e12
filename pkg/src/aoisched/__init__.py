"""Frame-driven mmWave sensor-network simulator and value-aware scheduler."""

__version__ = "0.1.0"
