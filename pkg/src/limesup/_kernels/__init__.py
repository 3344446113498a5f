"""Hot-kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
behaviorally equivalent (same contracts, same tie semantics) but slower.
Set ``LIMESUP_PURE_PYTHON=1`` to force the fallback, e.g. for benchmarking.
"""

import os

_force_py = os.environ.get("LIMESUP_PURE_PYTHON", "").lower() in ("1", "true", "yes")

if not _force_py:
    try:
        from limesup._kernels._scan_cy import (  # noqa: F401
            constant_split_scan,
            lasso_cd,
            linear_split_scan,
        )

        BACKEND = "cython"
    except ImportError:
        _force_py = True

if _force_py:
    from limesup._kernels._scan_py import (  # noqa: F401
        constant_split_scan,
        lasso_cd,
        linear_split_scan,
    )

    BACKEND = "python"
