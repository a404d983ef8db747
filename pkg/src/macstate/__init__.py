"""Bounds, capacities and coding-scheme simulation for the state-dependent MAC
with a common message, noncausal state at Encoder 1 and strictly causal state
at Encoder 2. All information quantities are in bits."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("macstate")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"
