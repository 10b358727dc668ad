from setuptools import setup

with open("README.md", "r", encoding="utf-8") as fh:
    long_description = fh.read()

setup(
    name="vortex-rom",
    version="1.0.0",
    author="Your Name",
    author_email="your.email@example.com",
    description="POD-Galerkin reduced-order model for 2D vortex merger in stream function-vorticity form",
    long_description=long_description,
    long_description_content_type="text/markdown",
    py_modules=[
        "fv_grid",
        "sparse_linalg",
        "fv_operators",
        "fom_solver",
        "pod",
        "rom",
        "metrics",
        "snapshot_io",
        "study",
        "study_report",
        "vortex_rom",
    ],
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Physics",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.12",
        "pandas>=1.3",
        "openpyxl>=3.0.0",
    ],
    extras_require={
        "test": ["pytest>=7"],
    },
    entry_points={
        "console_scripts": [
            "vortex-rom=vortex_rom:main",
        ],
    },
    keywords="cfd finite-volume navier-stokes pod reduced-order-model galerkin vortex-merger",
)
