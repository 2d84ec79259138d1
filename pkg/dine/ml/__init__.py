"""
Differentiable substrate and conditional flows
"""

from .data_preprocessing import DataPreprocessor, Dataset
from .flow import ConditionalFlow

__all__ = ['ConditionalFlow', 'DataPreprocessor', 'Dataset']
