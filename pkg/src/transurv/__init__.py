"""Random survival forests, survival networks and transfer learning between cohorts."""

__version__ = "0.1.0"
