"""Gaussian-surrogate (conditional) mutual information estimation and CI testing"""

from dine.services.citest import ci_test
from dine.services.estimator import estimate_cmi, estimate_mi

__all__ = ["estimate_cmi", "estimate_mi", "ci_test"]
