"""Street-scene hazard analysis: accident-radius labeling, hazard scores,
scene disorder and activation statistics, and lower-hazard mirror search."""

__version__ = "0.1.0"
