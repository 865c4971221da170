"""Backend selection for the grid search kernel.

The compiled extension is used when it imports; set ``SLOPEPLAN_PURE_PYTHON=1``
to force the pure-Python fallback.
"""

import os

from . import _search_py

BACKENDS = {"python": _search_py.grid_search}

try:
    from . import _search_ext
except ImportError:  # extension not built
    _search_ext = None
else:
    BACKENDS["compiled"] = _search_ext.grid_search

if os.environ.get("SLOPEPLAN_PURE_PYTHON", "").strip() not in ("", "0") or _search_ext is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"

grid_search = BACKENDS[BACKEND]


def get_backend(name=None):
    """Return the search function for ``name`` (default: the selected backend)."""
    if name is None:
        return grid_search
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable search backend {name!r}; "
                         f"available: {sorted(BACKENDS)}") from None
