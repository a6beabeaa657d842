"""Timed distributed optimization: worst-case functions, oracles, compressors, simulator."""
