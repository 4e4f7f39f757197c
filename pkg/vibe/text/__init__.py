"""Text preprocessing utilities.

Pure, deterministic functions with no file or model dependencies.
"""
