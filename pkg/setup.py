"""
Setup configuration for k2gof
"""
from setuptools import setup, find_packages

setup(
    name="k2gof",
    version="0.1.0",
    description="Goodness-of-fit testing of multivariate parametric models via projected "
                "empirical processes and the K-2 rotation",
    packages=find_packages(where="src"),
    package_dir={"": "src"},
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.9",
        "pandas>=1.5",
        "pydantic>=2.0",
        "structlog>=21.1.0",
        "pyyaml>=5.4.0",
        "python-dotenv>=0.19.0",
        "orjson>=3.6.0",
        "tqdm>=4.60.0",
        "joblib>=1.1",
    ],
    extras_require={
        "dev": [
            "pytest>=7.0",
            "pytest-cov>=2.12",
            "pytest-mock>=3.6.0",
            "black>=21.0",
            "flake8>=3.9",
            "mypy>=0.910",
        ]
    },
    entry_points={
        "console_scripts": [
            "k2gof=k2gof.main:main",
        ],
    },
)
