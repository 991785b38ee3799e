from setuptools import setup, find_packages

setup(
    name="upp_calibration_langgraph",
    version="0.3.0",
    author="AI Assistant",
    description="Digital twin and calibration pipeline for thermally tuned MZI-mesh photonic processors, "
                "orchestrated with LangGraph.",
    packages=find_packages(exclude=["tests", "tests.*"]),
    install_requires=[
        "langgraph>=0.0.48",
        "numpy>=1.24.0",
        "scipy>=1.10.0",
        "pandas>=2.0.0",
        "python-dotenv>=1.0.0",
    ],
    extras_require={
        "test": ["pytest>=7.4.0"],
    },
    entry_points={
        "console_scripts": [
            "upp-twin-cli=upp_calibration_langgraph.__main__:main",
        ],
    },
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
    ],
    python_requires='>=3.10',
)
