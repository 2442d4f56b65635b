"""Fair interest rates for overcollateralised lending-pool loans via barrier-option replication."""

import os as _os

# must precede the first numba import; worker count never changes results
if _os.environ.get("LENDFAIR_THREADS"):
    _os.environ.setdefault("NUMBA_NUM_THREADS", _os.environ["LENDFAIR_THREADS"])
_os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

__version__ = "0.1.0"
