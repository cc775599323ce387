import setuptools

from molchan.core import __version__

with open("README.md", "r") as fh:
    long_description = fh.read()

INSTALL_REQUIRES = [
    'numpy',         # Array math, random generators and linear algebra
    'scipy',         # Linear solves for the damped least squares and surface regression
    'pandas>=1.5',   # Trace and table CSV reading and writing
    'colorama',      # Makes ANSI escape character sequences work under MS Windows.
]

EXTRAS_REQUIRE = {
    'completion': ['argcomplete'],  # Shell tab completion for the command line
}

setuptools.setup(
    name="molchan",
    version=__version__,
    description="Model, calibrate and simulate a sprayed-chemical molecular communication channel",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=("sandbox", "examples", "examples.*")),
    python_requires=">=3.7",
    install_requires=INSTALL_REQUIRES,
    extras_require=EXTRAS_REQUIRE,
    entry_points={"console_scripts": ["molchan=molchan.__main__:main"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Operating System :: OS Independent",
        "Topic :: Scientific/Engineering",
    ],
)
