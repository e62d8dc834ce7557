#!/usr/bin/env python3
"""Export Keras VGG16 convolution weights in the raw layout crowdmt reads.

Per conv layer, in network order: kernel as float32 [out][in][3][3], then
bias as float32 [out], little-endian, no header.

    python3 tools/export_vgg16_weights.py data/vgg16_notop.f32

Needs tensorflow; the ImageNet weights are downloaded by Keras on first use.
"""

import argparse
import sys

import numpy as np


def export(model, path):
    count = 0
    with open(path, "wb") as out:
        for layer in model.layers:
            if layer.__class__.__name__ != "Conv2D":
                continue
            kernel, bias = layer.get_weights()
            # Keras stores [kh][kw][in][out].
            out.write(np.ascontiguousarray(kernel.transpose(3, 2, 0, 1), dtype="<f4").tobytes())
            out.write(np.ascontiguousarray(bias, dtype="<f4").tobytes())
            count += 1
    return count


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("output")
    parser.add_argument("--weights", default="imagenet", help="'imagenet' or a Keras weights file")
    args = parser.parse_args()

    from tensorflow.keras.applications import VGG16

    model = VGG16(weights=args.weights, include_top=False)
    layers = export(model, args.output)
    if layers != 13:
        sys.exit(f"expected 13 conv layers, wrote {layers}")
    print(f"wrote {layers} conv layers to {args.output}")


if __name__ == "__main__":
    main()
