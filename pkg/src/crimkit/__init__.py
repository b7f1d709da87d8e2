"""Desk-scale counterfactual object removal, insertion, and movement.

A tiny conditional denoiser trained on procedural counterfactual scenes,
steered at inference by cross-task guidance (scalar or spatial), with an
analytic Gaussian oracle that makes the guidance math exactly testable.
"""

__version__ = "0.1.0"
