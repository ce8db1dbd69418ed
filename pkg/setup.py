from setuptools import setup, find_packages

setup(
    name="aee_ts",
    version="0.1.0",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "numpy",
        "scipy",
        "matplotlib",
        "pyyaml",
        "pytest",
        "python-dotenv",
        "loguru",
    ],
    entry_points={
        "console_scripts": [
            "aee-ts=src.main:main",
        ],
    },
    description="Latent-space outlier detection and aggregated encoder explanations for univariate time series",
    keywords="time series, autoencoder, anomaly detection, dbscan, xai, grad-cam, lime, shap, lrp",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
    ],
    python_requires=">=3.8",
)
