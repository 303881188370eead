"""Trust monitoring for sensor feature streams.

A small numpy library that learns the distribution of clean sensor
features with a variational autoencoder, scores incoming samples by
likelihood regret computed with gradient-free (zeroth-order) per-sample
optimization, and gates a downstream predictor on the resulting trust
score. Includes a synthetic point-cloud laboratory with eight corruption
models for benchmarking, ROC/AUC evaluation, and a command-line front end.
"""

__version__ = "0.1.0"
