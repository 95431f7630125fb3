"""Step-chain kernels with a compiled core and a pure numpy fallback.

The compiled extension (:mod:`spinqds.kernels._core`, Cython + BLAS) is
used when it has been built and the environment variable ``SPINQDS_PURE``
is not set; otherwise the pure twin :mod:`spinqds.kernels.pure` serves the
same four functions.  ``backend()`` reports which one is active.
"""

from __future__ import annotations

import os

from spinqds.kernels import pure

if os.environ.get("SPINQDS_PURE"):
    _impl = pure
    _BACKEND = "pure"
else:
    try:
        from spinqds.kernels import _core as _impl  # type: ignore[no-redef]

        _BACKEND = "compiled"
    except ImportError:
        _impl = pure
        _BACKEND = "pure"

repeated_apply = _impl.repeated_apply
chain_product = _impl.chain_product
kraus_power = _impl.kraus_power
amplitude_chain = _impl.amplitude_chain


def backend() -> str:
    """Name of the active kernel backend: ``compiled`` or ``pure``."""
    return _BACKEND


__all__ = [
    "repeated_apply",
    "chain_product",
    "kraus_power",
    "amplitude_chain",
    "backend",
    "pure",
]
