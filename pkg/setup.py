try:
    from setuptools import setup
except ImportError:
    from distutils.core import setup

import relay_rmt

long_desc = ""
try:
    long_desc = open("README.MD").read()
except Exception:
    print("Couldn't read readme.")

setup(
    name='relay_rmt',
    description='Free probability and Monte Carlo ergodic capacity of '
                'dual-hop amplify-and-forward MIMO relays with '
                'transceiver impairments',
    long_description=long_desc,
    long_description_content_type='text/markdown',
    version='%s.%s.%s' % relay_rmt.__version__,
    url=relay_rmt.__website__,
    project_urls={
        "Source": relay_rmt.__website__,
    },
    author=relay_rmt.__author__,
    license='MIT',
    packages=[
        'relay_rmt',
        'relay_rmt.tests',
        ],
    package_data={
        'relay_rmt': [
            'docs/*.*',
            '*.[Mm][Dd]', '*.[Tt][Xx][Tt]',
            ]
        },
    platforms=["POSIX", "Windows"],
    keywords=["relay_rmt", "mimo", "relay", "random matrix",
              "free probability", "ergodic capacity", "monte carlo"],
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.6",
        "tomli>=1.1; python_version < '3.11'",
        ],
    python_requires=">=3.8",
    provides=['relay_rmt'],
    entry_points={
        'console_scripts': ['relay-rmt = relay_rmt.cli:main'],
        },
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Programming Language :: Python :: 3 :: Only",
        "Topic :: Scientific/Engineering :: Mathematics",
        ],
    zip_safe=False,
    )
