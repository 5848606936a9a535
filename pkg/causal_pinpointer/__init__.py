"""
Causal-Pinpointer: recursive causal discovery with latent confounders

Recovers the causal order, the number and attachment of latent variables
and every path matrix compatible with a linear non-Gaussian model, from
higher-order cumulants of the observed data.
"""

__version__ = "1.0.0"
__author__ = "Causal-Pinpointer Team"
