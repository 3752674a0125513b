from re import search

from setuptools import find_packages, setup

install_requires = [
    "typing-extensions>=4,<5",
    "simpy>=4,<5",
    "numpy>=1.22,<3",
]

tests_requires = [
    "pytest>=7.2,<8",
    "pytest-cov>=4,<5",
    "Jinja2>=3.1,<4",
    "packaging==23.2",
]

dev_requires = [
    "mypy>=1.6,<1.7",
] + tests_requires

install_jinja_requires = [
    "Jinja2>=3.1,<4",
]

with open("shardmap/version.py") as version_file:
    version = search('version = "(.*)"', version_file.read()).group(1)

with open("README.md", encoding="utf-8") as readme_file:
    readme = readme_file.read()

setup(
    name="shardmap",
    version=version,
    description="Sharded counters for hot spot objects on a simulated document store",
    long_description=readme,
    long_description_content_type="text/markdown",
    license="MIT",
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Developers",
        "Intended Audience :: Science/Research",
        "Topic :: Database",
        "Topic :: Scientific/Engineering",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "License :: OSI Approved :: MIT License",
    ],
    keywords="sharding contention document-store object-mapper simulation",
    packages=find_packages(include=["shardmap*"]),
    install_requires=install_requires,
    tests_require=install_jinja_requires + tests_requires,
    extras_require={
        "jinja": install_jinja_requires,
        "test": tests_requires,
        "dev": dev_requires,
    },
    entry_points={"console_scripts": ["shardmap=shardmap.cli:main"]},
    include_package_data=True,
    zip_safe=False,
    platforms="any",
)
