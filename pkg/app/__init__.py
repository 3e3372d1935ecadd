"""Multi-cell MIMO beamforming under instantaneous and pathwise CSIT."""
__version__ = "1.0.0"
