"""Desk-scale ubiquitous health monitoring pipeline.

Simulated wearable sensors stream physiological frames over a
TDMA-scheduled lossy channel to a gateway that delta-filters and
uploads observations to a health server, which scores risk, raises
alerts, and serves a clinician dashboard.
"""

__version__ = "0.1.0"
