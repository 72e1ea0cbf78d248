"""hermlat: exact hermitian-lattice computations over local fields."""

__version__ = "0.1.0"

import os as _os


def catalog_path(name=None):
    """Path to the bundled catalog directory, or to one of its files."""
    base = _os.path.join(_os.path.dirname(__file__), "catalog")
    return base if name is None else _os.path.join(base, name)


def catalog_files():
    base = catalog_path()
    return sorted(_os.path.join(base, f) for f in _os.listdir(base)
                  if f.endswith(".lat"))
