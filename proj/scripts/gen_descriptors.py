#!/usr/bin/env python3
"""Regenerates the JSON network descriptors under data/descriptors/.

The descriptors are checked in; run this only after changing an architecture.
Shape assumptions are written into each file's "notes" field.
"""
import json
import os
import sys

FORMAT = "wrpn-descriptor/1"


class Net:
    def __init__(self, name, input_chw, notes):
        self.name = name
        self.input = list(input_chw)
        self.notes = notes
        self.layers = []
        self.last = "input"

    def add(self, id_, kind, inputs=None, **kw):
        layer = {"id": id_, "kind": kind}
        layer.update(kw)
        src = inputs if inputs is not None else [self.last]
        if not (len(src) == 1 and self.layers and src[0] == self.layers[-1]["id"]) and not (
            len(src) == 1 and not self.layers and src[0] == "input"
        ):
            layer["inputs"] = src
        self.layers.append(layer)
        self.last = id_
        return id_

    def conv(self, id_, out, k, s=1, p=0, inputs=None):
        return self.add(id_, "conv", inputs, out_channels=out, kernel=k, stride=s, padding=p)

    def doc(self):
        return {"format": FORMAT, "name": self.name, "notes": self.notes, "input": self.input, "layers": self.layers}


def alexnet():
    n = Net("alexnet", (3, 224, 224),
            "Single-tower AlexNet in the tensorpack layout: conv0 12x12/4 VALID -> 54x54 with no pooling before "
            "conv1, SAME-padded 3x3/2 max pools after conv1 and conv2, VALID 3x3/2 pool after conv4, "
            "fc 9216-4096-4096-1000. Grouped convolutions of the two-tower original are not used.")
    n.conv("conv0", 96, 12, 4, 0); n.add("relu0", "relu")
    n.conv("conv1", 256, 5, 1, 2); n.add("bn1", "batchnorm")
    n.add("pool1", "maxpool", kernel=3, stride=2, padding=1); n.add("relu1", "relu")
    n.conv("conv2", 384, 3, 1, 1); n.add("bn2", "batchnorm")
    n.add("pool2", "maxpool", kernel=3, stride=2, padding=1); n.add("relu2", "relu")
    n.conv("conv3", 384, 3, 1, 1); n.add("bn3", "batchnorm"); n.add("relu3", "relu")
    n.conv("conv4", 256, 3, 1, 1); n.add("bn4", "batchnorm")
    n.add("pool4", "maxpool", kernel=3, stride=2); n.add("relu4", "relu")
    n.add("fc0", "fc", out_channels=4096); n.add("bnfc0", "batchnorm"); n.add("relufc0", "relu")
    n.add("fc1", "fc", out_channels=4096); n.add("bnfc1", "batchnorm"); n.add("relufc1", "relu")
    n.add("fct", "fc", out_channels=1000); n.add("prob", "softmax")
    return n


def alexnet_caffe():
    n = Net("alexnet_caffe", (3, 227, 227),
            "Single-tower AlexNet in the Caffe reference geometry (227x227 input, conv1 11x11/4 -> 55x55, "
            "3x3/2 pools after conv1, conv2 and conv5, LRN omitted). Shipped for comparison only.")
    n.conv("conv1", 96, 11, 4, 0); n.add("relu1", "relu"); n.add("pool1", "maxpool", kernel=3, stride=2)
    n.conv("conv2", 256, 5, 1, 2); n.add("relu2", "relu"); n.add("pool2", "maxpool", kernel=3, stride=2)
    n.conv("conv3", 384, 3, 1, 1); n.add("relu3", "relu")
    n.conv("conv4", 384, 3, 1, 1); n.add("relu4", "relu")
    n.conv("conv5", 256, 3, 1, 1); n.add("relu5", "relu"); n.add("pool5", "maxpool", kernel=3, stride=2)
    n.add("fc6", "fc", out_channels=4096); n.add("relu6", "relu")
    n.add("fc7", "fc", out_channels=4096); n.add("relu7", "relu")
    n.add("fc8", "fc", out_channels=1000); n.add("prob", "softmax")
    return n


def stem(n):
    n.conv("conv1", 64, 7, 2, 3)
    return n


def resnet34():
    n = Net("resnet34", (3, 224, 224),
            "Pre-activation ResNet-34, 224x224 input. Basic blocks [3,4,6,3] at widths 64/128/256/512; "
            "stride-2 blocks use a 1x1 projection shortcut on the pre-activated input.")
    stem(n); n.add("bn1", "batchnorm"); n.add("relu1", "relu"); n.add("pool1", "maxpool", kernel=3, stride=2, padding=1)
    x = "pool1"
    in_ch = 64
    for stage, (blocks, width) in enumerate(zip([3, 4, 6, 3], [64, 128, 256, 512]), start=2):
        for b in range(blocks):
            p = f"res{stage}{chr(ord('a') + b)}"
            stride = 2 if (b == 0 and stage > 2) else 1
            n.add(p + "_bn1", "batchnorm", [x]); pre = n.add(p + "_relu1", "relu")
            n.conv(p + "_conv1", width, 3, stride, 1); n.add(p + "_bn2", "batchnorm"); n.add(p + "_relu2", "relu")
            body = n.conv(p + "_conv2", width, 3, 1, 1)
            short = x
            if stride != 1 or in_ch != width:
                short = n.conv(p + "_proj", width, 1, stride, 0, inputs=[pre])
            x = n.add(p + "_add", "add", [body, short])
            in_ch = width
    n.add("bn_final", "batchnorm", [x]); n.add("relu_final", "relu")
    n.add("pool_final", "avgpool", **{"global": True})
    n.add("fc", "fc", out_channels=1000); n.add("prob", "softmax")
    return n


def resnet50():
    n = Net("resnet50", (3, 224, 224),
            "ResNet-50 (post-activation bottlenecks [3,4,6,3], widths 64/128/256/512 expanded 4x), "
            "224x224 input, stride on the 3x3 convolution, BN after every convolution.")
    stem(n); n.add("bn1", "batchnorm"); n.add("relu1", "relu"); n.add("pool1", "maxpool", kernel=3, stride=2, padding=1)
    x = "pool1"
    in_ch = 64
    for stage, (blocks, width) in enumerate(zip([3, 4, 6, 3], [64, 128, 256, 512]), start=2):
        for b in range(blocks):
            p = f"res{stage}{chr(ord('a') + b)}"
            stride = 2 if (b == 0 and stage > 2) else 1
            n.conv(p + "_conv1", width, 1, 1, 0, inputs=[x]); n.add(p + "_bn1", "batchnorm"); n.add(p + "_relu1", "relu")
            n.conv(p + "_conv2", width, 3, stride, 1); n.add(p + "_bn2", "batchnorm"); n.add(p + "_relu2", "relu")
            n.conv(p + "_conv3", width * 4, 1, 1, 0); body = n.add(p + "_bn3", "batchnorm")
            short = x
            if stride != 1 or in_ch != width * 4:
                n.conv(p + "_proj", width * 4, 1, stride, 0, inputs=[x]); short = n.add(p + "_proj_bn", "batchnorm")
            n.add(p + "_add", "add", [body, short]); x = n.add(p + "_relu", "relu")
            in_ch = width * 4
    n.add("pool_final", "avgpool", [x], **{"global": True})
    n.add("fc", "fc", out_channels=1000); n.add("prob", "softmax")
    return n


def inception_bn():
    n = Net("inception_bn", (3, 224, 224),
            "Batch-normalized Inception (GoogLeNet with 5x5 replaced by two 3x3), 224x224 input, module widths "
            "from the BN-Inception architecture table; BN+ReLU after every convolution.")

    def cbr(id_, out, k, s=1, p=0, inputs=None):
        n.conv(id_, out, k, s, p, inputs)
        n.add(id_ + "_bn", "batchnorm")
        return n.add(id_ + "_relu", "relu")

    cbr("conv1", 64, 7, 2, 3); x = n.add("pool1", "maxpool", kernel=3, stride=2, padding=1)
    cbr("conv2_reduce", 64, 1, inputs=[x]); cbr("conv2", 192, 3, 1, 1)
    x = n.add("pool2", "maxpool", kernel=3, stride=2, padding=1)

    def module(name, x, c1, c3r, c3, d3r, d3, pool, proj, stride=1):
        branches = []
        if c1:
            branches.append(cbr(name + "_1x1", c1, 1, inputs=[x]))
        cbr(name + "_3x3_reduce", c3r, 1, inputs=[x])
        branches.append(cbr(name + "_3x3", c3, 3, stride, 1))
        cbr(name + "_d3x3_reduce", d3r, 1, inputs=[x])
        cbr(name + "_d3x3a", d3, 3, 1, 1)
        branches.append(cbr(name + "_d3x3b", d3, 3, stride, 1))
        pooled = n.add(name + "_pool", pool, [x], kernel=3, stride=stride, padding=1)
        branches.append(cbr(name + "_pool_proj", proj, 1, inputs=[pooled]) if proj else pooled)
        return n.add(name + "_concat", "concat", branches)

    x = module("inc3a", x, 64, 64, 64, 64, 96, "avgpool", 32)
    x = module("inc3b", x, 64, 64, 96, 64, 96, "avgpool", 64)
    x = module("inc3c", x, 0, 128, 160, 64, 96, "maxpool", 0, stride=2)
    x = module("inc4a", x, 224, 64, 96, 96, 128, "avgpool", 128)
    x = module("inc4b", x, 192, 96, 128, 96, 128, "avgpool", 128)
    x = module("inc4c", x, 160, 128, 160, 128, 160, "avgpool", 128)
    x = module("inc4d", x, 96, 128, 192, 160, 192, "avgpool", 128)
    x = module("inc4e", x, 0, 128, 192, 192, 256, "maxpool", 0, stride=2)
    x = module("inc5a", x, 352, 192, 320, 160, 224, "avgpool", 128)
    x = module("inc5b", x, 352, 192, 320, 192, 224, "maxpool", 128)
    n.add("pool_final", "avgpool", [x], **{"global": True})
    n.add("fc", "fc", out_channels=1000); n.add("prob", "softmax")
    return n


def desk_cnn():
    n = Net("desk_cnn", (1, 12, 12),
            "Small CNN for the synthetic 12x12 pattern task. conv1 and fc_out are the exempt first/last layers; "
            "every hidden conv/fc is followed by batch norm.")
    n.conv("conv1", 16, 3, 1, 1); n.add("bn1", "batchnorm"); n.add("relu1", "relu")
    n.conv("conv2", 16, 3, 1, 1); n.add("bn2", "batchnorm"); n.add("relu2", "relu")
    n.add("pool2", "maxpool", kernel=2, stride=2)
    n.conv("conv3", 32, 3, 1, 1); n.add("bn3", "batchnorm"); n.add("relu3", "relu")
    n.add("pool3", "maxpool", kernel=2, stride=2)
    n.add("fc4", "fc", out_channels=64); n.add("bn4", "batchnorm"); n.add("relu4", "relu")
    n.add("fc_out", "fc", out_channels=10)
    return n


def desk_mlp():
    n = Net("desk_mlp", (1, 1, 16),
            "Small MLP for the two-class separable blob task.")
    n.add("fc1", "fc", out_channels=32); n.add("relu1", "relu")
    n.add("fc2", "fc", out_channels=32); n.add("bn2", "batchnorm"); n.add("relu2", "relu")
    n.add("fc_out", "fc", out_channels=2)
    return n


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), "..", "data", "descriptors")
    os.makedirs(out_dir, exist_ok=True)
    for build in (alexnet, alexnet_caffe, resnet34, resnet50, inception_bn, desk_cnn, desk_mlp):
        net = build()
        with open(os.path.join(out_dir, net.name + ".json"), "w", newline="\n") as f:
            json.dump(net.doc(), f, indent=1)
            f.write("\n")


if __name__ == "__main__":
    main()
