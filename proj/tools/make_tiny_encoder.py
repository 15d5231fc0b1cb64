#!/usr/bin/env python3
"""Export a small image/text encoder pair to ONNX.

The weights are seeded random projections, not a trained CLIP. The model is
used for tests and desk-scale runs: near-identical images map to nearby
embeddings, visually distinct images do not, and text lands in the same
output space. Any CLIP-style ONNX export with the same input/output contract
can be substituted via a backend manifest.

Image tower (<name>_image.onnx):
  pixel_values   float32 [N, 3, R, R]  (already mean/std normalized)
  image_embeds   float32 [N, D]
Text tower (<name>_text.onnx):
  text_features  float32 [N, V]        (hashed bag-of-words counts)
  text_embeds    float32 [N, D]

Each tower is a single-input graph; OpenCV's ONNX importer mishandles
batched multi-input graphs.
"""

import argparse
import json
import pathlib

import torch
from torch import nn


def image_tower(resolution: int, dim: int) -> nn.Module:
    return nn.Sequential(
        nn.Conv2d(3, 16, 5, stride=2, padding=2), nn.ReLU(),
        nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
        nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.ReLU(),
        nn.AvgPool2d(resolution // 32),
        nn.Flatten(),
        nn.Linear(64 * 4 * 4, dim),
    )


def export(model, example, path, input_name, output_name):
    torch.onnx.export(
        model.eval(), (example,), str(path),
        input_names=[input_name], output_names=[output_name],
        dynamic_axes={input_name: {0: "n"}, output_name: {0: "n"}},
        opset_version=11, dynamo=False)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="models")
    ap.add_argument("--name", default="tiny_encoder")
    ap.add_argument("--resolution", type=int, default=128)
    ap.add_argument("--vocab", type=int, default=2048)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--seed", type=int, default=20230101)
    args = ap.parse_args()

    if args.resolution % 32:
        raise SystemExit("resolution must be a multiple of 32")
    torch.manual_seed(args.seed)
    image = image_tower(args.resolution, args.dim)
    text = nn.Linear(args.vocab, args.dim, bias=False)

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    image_path = out / f"{args.name}_image.onnx"
    text_path = out / f"{args.name}_text.onnx"
    export(image, torch.zeros(1, 3, args.resolution, args.resolution), image_path, "pixel_values", "image_embeds")
    export(text, torch.zeros(1, args.vocab), text_path, "text_features", "text_embeds")

    manifest = {
        "model_path": image_path.name,
        "input_resolution": args.resolution,
        "dim": args.dim,
        "preprocessing": "clip_center_crop",
        "image_input": "pixel_values",
        "image_output": "image_embeds",
        "text": {
            "model_path": text_path.name,
            "input": "text_features",
            "output": "text_embeds",
            "tokenizer": "hashed_words",
            "vocab_size": args.vocab,
            "context_length": 77,
            "overflow": "error",
        },
    }
    (out / f"{args.name}.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
