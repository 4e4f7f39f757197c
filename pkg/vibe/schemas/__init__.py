"""Pydantic schemas for files read and written by the library."""
