"""Closed-loop simulator and library for frequency-constrained indirect MPC
of a dual-line grid-side converter: plant circuit model, sequence
estimation, QP-based receding-horizon control with a built-in dense solver,
carrier-based PWM and fault-scenario case studies."""

__version__ = "0.1.0"
