## Installs the opa and utils packages from src/, e.g. pip install -e pwn_opa

from setuptools import setup

setup \
(
    name='pwn_opa',
    version='1.0.0',
    description='Personalised resource-block allocation with surrogate-assisted multi-objective optimisation',
    packages=['opa', 'opa.emoo', 'opa.harness', 'utils'],
    package_dir={'': 'src'},
    python_requires='>=3.8',
    install_requires=['numpy', 'pandas', 'scipy', 'pymoo>=0.6.0', 'PyYAML', 'matplotlib'],
    extras_require={'test': ['pytest']},
    entry_points={'console_scripts': ['opa=opa.harness.cli:main']},
)
