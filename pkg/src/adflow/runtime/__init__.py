"""Execution: shared scheduler, push/pull machine and trace format."""
