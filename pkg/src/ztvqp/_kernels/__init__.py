"""Hot kernels: compiled Cython build if importable, NumPy fallback otherwise.

Set ``ZTVQP_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the
implementation in use; ``pure`` and ``compiled`` (``None`` when the
extension is not built) expose both for side-by-side comparison.
"""

import os

from . import _pykernels as pure

try:
    from . import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("ZTVQP_PURE_PYTHON", "") in ("", "0"):
    _impl = compiled
    BACKEND = "cython"
else:
    _impl = pure
    BACKEND = "python"

activation = _impl.activation
znn_rhs = _impl.znn_rhs
residual_norm = _impl.residual_norm
dh_fk_jac = _impl.dh_fk_jac

ZERO_THRESHOLD = pure.ZERO_THRESHOLD
SCHEME_CODES = {
    "REF11": pure.REF11,
    "REF18": pure.REF18,
    "REF19": pure.REF19,
    "REF20": pure.REF20,
    "REF38": pure.REF38,
    "REF39": pure.REF39,
    "PTC_NT_FOZNN": pure.PTC_NT_FOZNN,
}

__all__ = ["activation", "znn_rhs", "residual_norm", "dh_fk_jac", "BACKEND",
           "pure", "compiled", "SCHEME_CODES", "ZERO_THRESHOLD"]
