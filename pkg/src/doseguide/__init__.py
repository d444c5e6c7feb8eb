"""GP-calibrated decision support for multi-stage radiotherapy dosing.

The package trains a calibrated transition model (black-box point predictor
plus a per-dimension GP bias term), Laplace-approximated GP classifiers for
the two binary treatment outcomes, propagates state uncertainty into outcome
probabilities, and adjudicates physician versus optimizer dose prescriptions
with a Monte-Carlo reward hypothesis test.
"""

__version__ = "0.1.0"
