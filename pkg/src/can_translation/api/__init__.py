"""HTTP service for the CAN translation toolkit."""
