"""Warm-cloud reaction-diffusion model: steady states, Turing analysis and pseudo-spectral simulation."""

__version__ = "0.1.0"
