"""
Command-line entry point (``mcpst``).
"""
