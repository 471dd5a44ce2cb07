"""Hot-kernel backend selection.

Imports the compiled extension when available, otherwise falls back to the
numpy reference implementation with identical API.  Set TORUSGAS_PURE_PYTHON=1
to force the fallback (used by the backend-comparison benchmark and tests).
"""

from __future__ import annotations

import os
import warnings

from . import _ref

if os.environ.get("TORUSGAS_PURE_PYTHON", "").strip() not in ("", "0"):
    _impl = _ref
else:
    try:
        from . import _hot as _impl  # type: ignore[no-redef]
    except ImportError:
        warnings.warn("compiled kernels not available; using the slower "
                      "pure-numpy backend", stacklevel=2)
        _impl = _ref

BACKEND: str = _impl.BACKEND

phi_of_dist = _impl.phi_of_dist
rel_energy = _impl.rel_energy
rel_energy_excl = _impl.rel_energy_excl
rel_energy_grid = _impl.rel_energy_grid
total_energy = _impl.total_energy
pair_dist_hist = _impl.pair_dist_hist
run_proposals = _impl.run_proposals

# the reference implementation stays importable for cross-checks
reference = _ref
