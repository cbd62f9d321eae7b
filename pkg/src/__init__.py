"""
Source package initialization.
This file marks the 'src' directory as a Python package.
"""

__all__ = [
    'core',
    'extraction',
    'transformation',
    'models',
    'defense',
    'compensatory',
    'evaluation',
    'loading',
    'pipelines',
    'utils',
]
