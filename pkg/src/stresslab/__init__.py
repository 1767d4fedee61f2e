"""Latent-factor stress testing (PCA, autoencoder, VAE Monte Carlo) over
sector-tagged daily equity returns."""

__version__ = "0.1.0"
