"""
Setup configuration for the label-smoothing poisoning laboratory package.
"""
from setuptools import setup, find_packages

setup(
    name="lsp_lab",
    version="0.1.0",
    packages=find_packages(include=["src", "src.*"]),
    python_requires=">=3.11",
    install_requires=[
        "pandas>=2.2.1",
        "numpy>=1.26.4",
        "python-dotenv>=1.0.1",
        "torch>=2.2.0",
        "scipy>=1.12.0",
        "scikit-learn>=1.4.0",
        "rich>=13.7.0",
        "tqdm>=4.66.0",
        "tabulate>=0.9.0",
    ],
    extras_require={
        "test": ["pytest>=8.0.0"],
    },
    entry_points={
        "console_scripts": [
            "lsp-lab=src.pipelines.cli:main",
        ],
    },
    author="Sergio Ayala",
    description="Label-smoothing poisoning experiments against trigger-reversal backdoor defenses",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3.11",
    ],
)
