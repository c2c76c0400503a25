"""Entropy-maximal floodings of metric graphs and their discrete counterparts."""
