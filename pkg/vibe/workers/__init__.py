"""Long-running jobs built from the service layer."""
