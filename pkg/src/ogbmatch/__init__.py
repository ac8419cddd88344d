"""Data-driven output matching for output-generalized bilinear systems."""
