"""Small helpers shared by the writers."""

from __future__ import annotations

import contextlib
import os


@contextlib.contextmanager
def open_text(target, mode: str = "w"):
    """Yield a text stream for ``target``: a path is opened, a stream is passed through."""
    if hasattr(target, "write"):
        yield target
        return
    with open(os.fspath(target), mode, newline="") as fh:
        yield fh
