"""
splatmae - masked-autoencoder representation learning on 3D Gaussian splats.

A desk-scale toolkit that groups splats in a normalized parameter space,
tokenizes the groups with a learnable temperature-scaled pooling layer and
pretrains a transformer encoder by reconstructing masked groups.
"""

__version__ = "0.1.0"
__author__ = "Engineering Team"
__email__ = "engineering@company.com"
