"""Federated training of user-authentication models with random binary embeddings.

Users jointly train a shared model with federated averaging; each user
privately draws a random binary vector as its reference embedding and
trains the model to correlate its outputs with it.  The package covers the
whole pipeline at desk scale: codebook sizing from a provable
minimum-distance bound, synthetic data generation, federated training,
warm-up threshold calibration, authentication, and ROC evaluation, behind
both an HTTP service and a command-line interface.
"""

__version__ = "0.1.0"
