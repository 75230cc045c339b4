"""
Logging, errors, random streams and CSV/JSON outputs
"""
