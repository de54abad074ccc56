"""Pick the compiled search kernel if it imports, else the pure-Python one.

Set ``KERNELBOUNDS_PURE=1`` to force the fallback.
"""

import os

from . import _search_py

python_backend = _search_py
compiled_backend = None

if os.environ.get("KERNELBOUNDS_PURE") != "1":
    try:
        from . import _search_ext as compiled_backend  # type: ignore[no-redef]
    except ImportError:  # pragma: no cover - depends on the build
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = backend.NAME
