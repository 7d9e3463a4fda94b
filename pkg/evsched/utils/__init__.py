"""
Helpers shared by the CLI and the web service.
"""
