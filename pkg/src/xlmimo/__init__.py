"""Uplink XL-MIMO simulation: channel model, MMSE estimation, pilot assignment,
subarray selection and P-MMSE detection."""

__version__ = "0.1.0"
