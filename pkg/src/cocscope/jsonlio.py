"""Line-delimited JSON record IO.

Every intermediate artifact in the pipeline is a UTF-8 JSONL file so stages
stay independently inspectable and diffable.  Serialization is canonical
(sorted keys, compact separators) so identical data produces identical bytes.
"""

import hashlib
import json
import os


def dumps(record) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path, records):
    """Write records atomically: temp file in the same directory, then rename."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps(record))
            fh.write("\n")
    os.replace(tmp, path)


def read_jsonl(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
