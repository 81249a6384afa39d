from setuptools import setup, find_packages
import sys

if ("install" in sys.argv) and sys.version_info < (3, 8, 0):
    raise SystemExit("LKDL requires Python 3.8")

globals = {}
exec(open("src/lkdl/__init__.py").read(), globals)
__VERSION__ = globals["__VERSION__"]

DESC = 'Linearized kernel dictionary learning with Nystrom virtual samples'

setup(
    name = 'LKDL',
    version=__VERSION__,
    description=DESC,
    license=open('LICENSES.txt').read(),
    packages = find_packages('src'),
    package_dir = {'':'src'},
    zip_safe = False,
    python_requires='>=3.8',
    install_requires=[
        "numpy >= 1.17",
        "scipy >= 1.4",
        "pydantic >= 2.0"
    ],
    extras_require={
        "test": ["pytest >= 6.0"]
    },
    entry_points={
        "console_scripts": ["lkdl = lkdl.cli:main"]
    }
)
