import gzip
from pathlib import Path

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def encode_record(timestamp=0, client_id=0, object_id=0, size=0,
                  method=0, status=0, doc_type=0, server=0) -> bytes:
    """Byte-writing oracle for a trace record, built field by field without ``struct``."""
    out = bytearray()
    for value in (timestamp, client_id, object_id, size):
        out += int(value).to_bytes(4, "big")
    for value in (method, status, doc_type, server):
        out += int(value).to_bytes(1, "big")
    return bytes(out)


def write_trace(path: Path, timestamps, compress=False, rng=None) -> Path:
    """Write a binary trace whose records carry ``timestamps`` (other fields random if ``rng``)."""
    if rng is None:
        payload = b"".join(encode_record(t) for t in timestamps)
    else:
        ts = np.asarray(timestamps, dtype=">u4")
        rec = np.zeros(len(ts), dtype=[("ts", ">u4"), ("c", ">u4"), ("o", ">u4"), ("s", ">u4"),
                                      ("codes", "u1", (4,))])
        rec["ts"] = ts
        rec["c"] = rng.integers(0, 2**32, len(ts), dtype=np.uint64)
        rec["o"] = rng.integers(0, 2**32, len(ts), dtype=np.uint64)
        rec["s"] = rng.integers(0, 2**32, len(ts), dtype=np.uint64)
        rec["codes"] = rng.integers(0, 256, (len(ts), 4))
        payload = rec.tobytes()
    if compress:
        payload = gzip.compress(payload, mtime=0)
    path.write_bytes(payload)
    return path


@pytest.fixture
def acceptance_line():
    def record(criterion: str, ok: bool | None, detail: str = ""):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        ACCEPTANCE_LINES.append(f"{status}  {criterion}  {detail}".rstrip())
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
