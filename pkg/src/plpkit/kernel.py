"""Backend selection for the sampling kernel.

Prefers the compiled twin when it built; PLPKIT_PURE=1 forces the pure
module. The two are bit-identical, so the choice never changes results,
only throughput.
"""

import os

if os.environ.get("PLPKIT_PURE"):
    from . import _kernel_py as _impl
else:
    try:
        from . import _kernel_c as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernel_py as _impl

BACKEND = _impl.BACKEND
mix64 = _impl.mix64
unit_uniform = _impl.unit_uniform
sample_worldkeys = _impl.sample_worldkeys
draw_gaussian = _impl.draw_gaussian
draw_poisson = _impl.draw_poisson
draw_gamma = _impl.draw_gamma
