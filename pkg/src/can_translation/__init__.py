"""
CAN Translation - recover CAN signal definitions from a driving capture
by tokenizing payloads and regressing tokens against OBD-II diagnostics.
"""

__version__ = "1.0.0"
