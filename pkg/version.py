"""
Version information for the ETID unlearning toolkit.
"""

__version__ = "0.1.0"
__author__ = "ETID contributors"
__description__ = "Ensemble-based machine unlearning with iterative information distillation."
