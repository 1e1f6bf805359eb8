"""Binary checkpoint format for NetworkParams.

Layout (all integers little-endian)::

    magic            8 bytes  b"DNNNSRCK"
    version          uint32   (currently 1)
    n_dims           uint32
    layer_dims       n_dims x uint32
    activation       uint8 length + ASCII tag
    output act.      uint8 length + ASCII tag
    theta            float64 little-endian, flatten order (vec W_1..W_L, b_1..b_L)

Nothing follows theta; a short or long file is rejected.
"""
import struct

import numpy as np

from .errors import FormatError
from .fcnn import NetworkParams
from .numeric import param_count

MAGIC = b"DNNNSRCK"
VERSION = 1


def _tag(s):
    raw = s.encode("ascii")
    return struct.pack("<B", len(raw)) + raw


def dumps(params):
    dims = params.layer_dims
    head = MAGIC + struct.pack("<II", VERSION, len(dims)) + struct.pack("<%dI" % len(dims), *dims)
    head += _tag(params.activation) + _tag(params.output_activation)
    return head + params.theta().astype("<f8").tobytes()


def loads(blob):
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("checkpoint truncated")
        chunk = bytes(view[pos:pos + n])
        pos += n
        return chunk

    if take(len(MAGIC)) != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    version, n_dims = struct.unpack("<II", take(8))
    if version != VERSION:
        raise FormatError("unsupported checkpoint version %d" % version)
    if not 2 <= n_dims <= 1024:
        raise FormatError("implausible layer count %d" % n_dims)
    dims = struct.unpack("<%dI" % n_dims, take(4 * n_dims))
    tags = []
    for _ in range(2):
        (length,) = struct.unpack("<B", take(1))
        tags.append(take(length).decode("ascii"))
    n = param_count(dims)
    theta = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64)
    if pos != len(view):
        raise FormatError("trailing bytes after parameters")
    try:
        shell = NetworkParams(dims, [np.zeros((o, i)) for i, o in zip(dims[:-1], dims[1:])],
                              [np.zeros(o) for o in dims[1:]], tags[0], tags[1])
    except ValueError as exc:
        raise FormatError("invalid checkpoint header: %s" % exc) from exc
    return shell.with_theta(theta)


def save_checkpoint(params, path):
    with open(path, "wb") as fh:
        fh.write(dumps(params))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
