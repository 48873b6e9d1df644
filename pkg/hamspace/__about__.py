from __future__ import absolute_import, division, print_function

__all__ = [
    "__title__", "__summary__", "__version__", "__author__",
    "__license__", "__copyright__",
]

__title__ = "hamspace"

__summary__ = 'Learned hash codes and exact multi-index search in Hamming space'

__version__ = "0.1.0"

__author__ = "hamspace developers"

__license__ = "GNU General Public License, Version 3"

__copyright__ = 'Copyright (C) 2026 hamspace developers'
