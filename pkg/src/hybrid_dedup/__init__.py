"""Hybrid inline and post-processing block deduplication simulator."""
