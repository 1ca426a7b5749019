"""Select the compiled core when available, else the pure-Python fallback.

Set ``SNPS3_PURE_PYTHON=1`` to force the fallback.
"""
import os

from snps3 import _pykernels

if os.environ.get("SNPS3_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from snps3 import _speedups as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
wordpiece_word = _impl.wordpiece_word
wordpiece_words = _impl.wordpiece_words
count_tagged = _impl.count_tagged
scan_chosen = _impl.scan_chosen
