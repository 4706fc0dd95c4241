"""Writes a small STNS tensor the way an external exporter would.

The companion JSON lists every value as its float32 bit pattern so the C++
reader can be checked bit for bit.
"""
import json
import struct
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent


def write_stns(path: Path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype="<f4")
    header = b"STNS" + struct.pack("<III", 1, 1, array.ndim)
    header += b"".join(struct.pack("<Q", d) for d in array.shape)
    path.write_bytes(header + array.tobytes())


def main() -> None:
    rng = np.random.default_rng(20240816)
    frames = rng.normal(size=(7, 5)).astype(np.float32)
    frames[0, 0] = np.float32(1e-38)  # subnormal-adjacent value
    frames[1, 1] = np.float32(-0.0)
    write_stns(HERE / "bridge_layer8.stns", frames)
    bits = frames.view("<u4").ravel().tolist()
    meta = {"shape": list(frames.shape), "bits": bits}
    (HERE / "bridge_layer8.json").write_text(json.dumps(meta) + "\n")
    # Manifest row as the exporter leaves it: feature path relative to the
    # manifest, alignments converted to seconds and sorted.
    row = {
        "utterance_id": "bridge-0001",
        "speaker_id": "1089",
        "audio": None,
        "features": "bridge_layer8.stns",
        "alignments": [
            {"start": 0.0, "end": 0.06, "label": "hh ah"},
            {"start": 0.06, "end": 0.14, "label": "l ow"},
        ],
    }
    (HERE / "bridge_manifest.jsonl").write_text(json.dumps(row) + "\n")


if __name__ == "__main__":
    main()
