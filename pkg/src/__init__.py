"""Point-source scattering from infinite periodic sound-hard boundaries."""

__version__ = "0.1.0"
