"""NNGP Impute — multiple imputation of incomplete tabular data via Neural Network Gaussian Processes."""

__version__ = "0.1.0"
