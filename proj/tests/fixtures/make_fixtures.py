"""Hand-encodes the golden .mnv2 fixtures with struct, independently of the C++ writer."""
import struct
from pathlib import Path

HERE = Path(__file__).parent


def record(name, dims, offset):
    b = name.encode()
    return struct.pack("<H", len(b)) + b + struct.pack("<B", len(dims)) + \
        b"".join(struct.pack("<I", d) for d in dims) + struct.pack("<Q", offset)


def archive(entries, offsets=None):
    header = 12 + sum(2 + len(n) + 1 + 4 * len(d) + 8 for n, d, _ in entries)
    if offsets is None:
        offsets, pos = [], header
        for _, _, vals in entries:
            offsets.append(pos)
            pos += 4 * len(vals)
    out = b"MNV2" + struct.pack("<II", 1, len(entries))
    for (name, dims, _), off in zip(entries, offsets):
        out += record(name, dims, off)
    for _, _, vals in entries:
        out += struct.pack("<%df" % len(vals), *vals)
    return out


TWO = [("a", [2, 2], [1.0, 2.0, 3.0, 4.0]), ("b", [3], [0.5, -1.0, 2.0])]

if __name__ == "__main__":
    (HERE / "two_tensors.mnv2").write_bytes(archive(TWO))
    # b's payload starts inside a's
    (HERE / "overlap.mnv2").write_bytes(archive(TWO, offsets=[48, 56]))
    (HERE / "empty.mnv2").write_bytes(archive([]))
