"""Harmonize heterogeneous cybersecurity NER corpora onto one STIX 2.1-derived label set."""

__version__ = "0.1.0"
