"""
Utility functions and helper modules.
"""

__all__ = ['logger', 'settings', 'errors']
