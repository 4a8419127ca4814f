## Root manifest so the package installs from the repository root, mirrors pwn_opa/setup.py

from setuptools import setup

setup \
(
    name='pwn_opa',
    version='1.0.0',
    description='Personalised resource-block allocation with surrogate-assisted multi-objective optimisation',
    packages=['opa', 'opa.emoo', 'opa.harness', 'utils'],
    package_dir={'': 'pwn_opa/src'},
    python_requires='>=3.8',
    install_requires=['numpy', 'pandas', 'scipy', 'pymoo>=0.6.0', 'PyYAML', 'matplotlib'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['opa=opa.harness.cli:main']},
)
