"""Sidecar process exposing promptable segmentation models over the
annoflow backend wire protocol (see the repository's PROTOCOL.md).

The sidecar is deliberately independent of the workbench package: it
implements the protocol from the document so it can run on a GPU box with
nothing but its model dependencies installed.
"""

__version__ = "0.1.0"
