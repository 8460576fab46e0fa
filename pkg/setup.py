# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.

from setuptools import setup, find_packages

setup(
    name="dispatch-emulator",
    version="0.0.1",
    packages=find_packages(exclude=["tests"]),
    entry_points = {
        'console_scripts': [
            'dispatch-emulator=dispatch_emulator.cli:main'
        ]
    },
    python_requires=">=3.9",
    install_requires=[
        "numpy",
        "networkx",
        "pandas>=1.5",
        "jsonschema>=4",
    ],
)
