"""Multipath low-delay transport laboratory."""
