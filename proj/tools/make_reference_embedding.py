#!/usr/bin/env python3
"""Compute a reference image embedding for the bundled tiny encoder.

Runs the ONNX graph with onnx's pure-NumPy reference evaluator and its own
preprocessing, so the C++ backend can be checked against an independent
implementation. Writes tests/fixtures/reference_image.png and
tests/fixtures/reference_embedding.json.
"""

import json
import pathlib
import zlib
import struct

import numpy as np
from onnx.reference import ReferenceEvaluator

CLIP_MEAN = np.array([0.48145466, 0.4578275, 0.40821073], dtype=np.float32)
CLIP_STD = np.array([0.26862954, 0.26130258, 0.27577711], dtype=np.float32)


def make_image(size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size]
    img = np.zeros((size, size, 3), dtype=np.uint8)
    img[..., 0] = (x * 255 // (size - 1)).astype(np.uint8)
    img[..., 1] = ((x // 8 + y // 8) % 2 * 200 + 30).astype(np.uint8)
    img[..., 2] = (y * 255 // (size - 1)).astype(np.uint8)
    return img


def write_png(path: pathlib.Path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    raw = b"".join(b"\x00" + rgb[row].tobytes() for row in range(h))

    def chunk(tag: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    png = b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0))
    png += chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b"")
    path.write_bytes(png)


def main():
    root = pathlib.Path(__file__).resolve().parent.parent
    manifest = json.loads((root / "models" / "tiny_encoder.json").read_text())
    size = manifest["input_resolution"]
    img = make_image(size)  # already at model resolution: no resize or crop

    out_dir = root / "tests" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_png(out_dir / "reference_image.png", img)

    pixels = (img.astype(np.float32) / 255.0 - CLIP_MEAN) / CLIP_STD
    pixels = pixels.transpose(2, 0, 1)[None].astype(np.float32)
    sess = ReferenceEvaluator(str(root / "models" / manifest["model_path"]))
    (emb,) = sess.run([manifest["image_output"]], {manifest["image_input"]: pixels})
    emb = emb[0].astype(np.float64)
    emb /= np.linalg.norm(emb)
    (out_dir / "reference_embedding.json").write_text(json.dumps(
        {"image": "reference_image.png", "embedding": [float(v) for v in emb]}, indent=1) + "\n")


if __name__ == "__main__":
    main()
