"""Two-file complex container: ``<stem>.hdr`` (text dims) + ``<stem>.cfl`` (raw complex64).

The header lists the array extents fastest-first (reversed numpy shape),
padded with 1 to five entries. The payload is little-endian interleaved
float32 (real, imag) in column-major order of the declared dims, which is
the C-order byte layout of the numpy array.
"""

from pathlib import Path

import numpy as np

MAX_DIMS = 5
_DTYPE = np.dtype("<c8")


def _paths(stem):
    stem = str(stem)
    return Path(stem + ".hdr"), Path(stem + ".cfl")


def write_cfl(stem, tensor):
    arr = np.asarray(tensor)
    if arr.ndim > MAX_DIMS:
        raise ValueError(f"at most {MAX_DIMS} dims are supported, got {arr.ndim}")
    dims = list(arr.shape[::-1]) + [1] * (MAX_DIMS - arr.ndim)
    hdr, cfl = _paths(stem)
    hdr.parent.mkdir(parents=True, exist_ok=True)
    hdr.write_text("# Dimensions\n" + " ".join(str(d) for d in dims) + "\n")
    np.ascontiguousarray(arr, dtype=_DTYPE).tofile(cfl)


def read_header(stem):
    hdr, _ = _paths(stem)
    if not hdr.exists():
        raise FileNotFoundError(f"missing header {hdr}")
    lines = hdr.read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("#"):
        raise ValueError(f"malformed header {hdr}")
    try:
        dims = [int(tok) for tok in lines[1].split()]
    except ValueError:
        raise ValueError(f"malformed dims line in {hdr}: {lines[1]!r}") from None
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"invalid dims in {hdr}: {dims}")
    return dims


def read_cfl(stem, ndim=None):
    """Read a tensor back. ``ndim`` restores leading singleton axes the header cannot encode."""
    dims = read_header(stem)
    _, cfl = _paths(stem)
    if not cfl.exists():
        raise FileNotFoundError(f"missing payload {cfl}")
    count = int(np.prod(dims))
    expected = count * _DTYPE.itemsize
    actual = cfl.stat().st_size
    if actual != expected:
        raise ValueError(f"{cfl} holds {actual} bytes, header declares {expected}")
    data = np.fromfile(cfl, dtype=_DTYPE, count=count)
    if ndim is None:
        while len(dims) > 1 and dims[-1] == 1:
            dims = dims[:-1]
    else:
        if any(d != 1 for d in dims[ndim:]):
            raise ValueError(f"header dims {dims} do not fit in {ndim} axes")
        dims = (dims + [1] * ndim)[:ndim]
    return data.reshape(dims[::-1])
