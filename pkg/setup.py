from setuptools import setup

with open("requirements.txt") as f:
    requirements = f.read().splitlines()

setup(
    name="snortmine",
    version="0.1.0",
    description="Signature mining for network intrusion detection: C4.5, AdaBoost, Apriori and Snort rules",
    packages=["snortmine"],
    package_data={"snortmine": ["data/*.tsv"]},
    zip_safe=False,
    install_requires=requirements,
    python_requires=">=3.8",
    entry_points={"console_scripts": ["snortmine=snortmine.cli:main"]},
)
