"""Python surface of the archdiff C++ core.

Importable either from an installed wheel (the compiled module sits inside
this package) or from a CMake build tree with the build directory on
PYTHONPATH.
"""

try:
    from ._archdiff import *  # noqa: F401,F403
    from ._archdiff import __version__  # noqa: F401
except ImportError:  # build-tree layout
    from _archdiff import *  # noqa: F401,F403
    from _archdiff import __version__  # noqa: F401
