"""Reference denoiser worker speaking the FDN1 stdio protocol."""

__version__ = "0.1.0"
