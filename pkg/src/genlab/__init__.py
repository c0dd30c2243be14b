"""genlab: a desk-scale Wasserstein GAN laboratory.

Trains spectrally normalized GANs on synthetic 2-D targets and measures
critic/generator under- and overfitting with auxiliary and independent
critics.
"""

__version__ = "0.1.0"
