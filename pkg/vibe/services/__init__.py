"""Service-layer logic, one module per pipeline stage."""
