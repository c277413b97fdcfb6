"""
Data module for the CAN translation toolkit.
Handles capture parsing, trace construction and synthetic captures.
"""

from .canio import CanFrame, Capture, LogFormat, parse_log, read_log, write_log
from .traces import AidKey, AidTrace, DidTrace, build_aid_traces, build_did_traces, to_physical
