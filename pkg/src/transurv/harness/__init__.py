"""Data ingestion, synthetic cohorts, the cross-validation protocol and
experiment grids."""
