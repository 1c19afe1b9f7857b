#!/usr/bin/env python3
"""Encode the EuroSAT multispectral dataset into an AEMB embedding pool.

Loads 64x64x13 GeoTIFF patches from a local EuroSAT_MS directory, runs
them through an SSL-pretrained ResNet-50 backbone (MoCo weights from the
SSL4EO-S12 release, conv1 widened to 13 bands), and writes the
2048-dimensional features plus labels as a single AEMB file with a JSON
manifest sidecar.  Samples are processed in the dataset's canonical order
(class directories sorted by name, files sorted lexicographically), so
repeated exports are byte-identical.

This script has exactly one job; it neither trains nor selects anything.

Usage:
    python export_embeddings.py --dataset /data/EuroSAT_MS \
        --checkpoint /data/B13_rn50_moco_0099.pth --out eurosat.aemb
"""

from __future__ import annotations

import argparse
import hashlib
import json
import struct
import sys
import time
from pathlib import Path

import numpy as np

EXPECTED_SHAPE = (64, 64, 13)
EMBED_DIM = 2048

DATASET_HELP = """\
EuroSAT multispectral dataset not found at {path!r}.
Download EuroSAT_MS (the 13-band GeoTIFF release, ~2 GB) from
https://github.com/phelber/EuroSAT (EuroSATallBands.zip / EuroSAT_MS.zip),
unpack it, and pass the directory that contains the ten class folders
(AnnualCrop, Forest, ...) via --dataset."""

CHECKPOINT_HELP = """\
Encoder checkpoint not found at {path!r}.
Download an SSL4EO-S12 MoCo ResNet-50 Sentinel-2 (13-band) checkpoint,
e.g. B13_rn50_moco_0099_ckpt.pth from
https://github.com/zhu-xlab/SSL4EO-S12 (released on the project's
download page), and pass the file via --checkpoint."""


class FetchError(RuntimeError):
    """Dataset or checkpoint is unavailable; message carries instructions."""


class ShapeError(ValueError):
    """A patch or the encoder output has an unexpected shape."""


def discover_dataset(root) -> tuple[list[tuple[Path, int]], list[str]]:
    """Canonically ordered (path, label) pairs plus the class-name list."""
    root = Path(root)
    if not root.is_dir():
        raise FetchError(DATASET_HELP.format(path=str(root)))
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise FetchError(DATASET_HELP.format(path=str(root)))
    classes = [p.name for p in class_dirs]
    samples: list[tuple[Path, int]] = []
    for label, class_dir in enumerate(class_dirs):
        files = sorted(class_dir.glob("*.tif")) + sorted(class_dir.glob("*.tiff"))
        if not files:
            raise FetchError(
                f"class directory {class_dir} holds no .tif patches\n\n"
                + DATASET_HELP.format(path=str(root))
            )
        samples.extend((f, label) for f in files)
    return samples, classes


def load_patch(path) -> np.ndarray:
    """One patch as float32 (13, 64, 64), bands in file order."""
    import tifffile

    raw = tifffile.imread(str(path))
    if raw.shape != EXPECTED_SHAPE:
        if raw.ndim == 3 and raw.shape[0] == EXPECTED_SHAPE[2]:
            raw = np.transpose(raw, (1, 2, 0))
        if raw.shape != EXPECTED_SHAPE:
            raise ShapeError(f"{path}: patch shape {raw.shape}, expected {EXPECTED_SHAPE}")
    return np.transpose(raw.astype(np.float32), (2, 0, 1))


def normalize_batch(batch: np.ndarray) -> np.ndarray:
    """SSL4EO-S12 preprocessing: reflectance scaled into [0, 1] by 1e4."""
    return np.clip(batch / 10000.0, 0.0, 1.0)


_PREFIXES = ("module.encoder_q.", "encoder_q.", "module.backbone.", "backbone.", "module.")


def build_encoder(checkpoint_path, in_channels: int = 13):
    """ResNet-50 with a 13-band stem, MoCo weights, fc stripped, eval mode."""
    import torch
    from torch import nn
    from torchvision.models import resnet50

    path = Path(checkpoint_path)
    if not path.is_file():
        raise FetchError(CHECKPOINT_HELP.format(path=str(path)))
    model = resnet50(weights=None)
    model.conv1 = nn.Conv2d(in_channels, 64, kernel_size=7, stride=2, padding=3, bias=False)

    blob = torch.load(str(path), map_location="cpu", weights_only=False)
    state = blob.get("state_dict", blob) if isinstance(blob, dict) else blob
    cleaned = {}
    for key, value in state.items():
        for prefix in _PREFIXES:
            if key.startswith(prefix):
                key = key[len(prefix):]
                break
        if key.startswith("fc.") or "queue" in key:
            continue  # MoCo projection head / negatives queue
        cleaned[key] = value
    missing, unexpected = model.load_state_dict(cleaned, strict=False)
    missing = [k for k in missing if not k.startswith("fc.")]
    if missing:
        raise ShapeError(
            f"{path}: checkpoint does not cover the backbone "
            f"(first missing keys: {missing[:4]})"
        )
    if unexpected:
        raise ShapeError(f"{path}: unrecognized checkpoint keys: {unexpected[:4]}")
    model.fc = nn.Identity()
    model.eval()
    return model


def export_embeddings(
    dataset_dir, checkpoint, out_path, batch_size: int = 64, device: str = "cpu"
) -> dict:
    """Encode the full dataset and write AEMB + manifest; returns the manifest."""
    import torch

    samples, classes = discover_dataset(dataset_dir)
    encoder = build_encoder(checkpoint).to(device)
    n = len(samples)
    labels = np.array([label for _, label in samples], dtype=np.uint16)

    out_path = Path(out_path)
    payload_sha = hashlib.sha256()
    with out_path.open("wb") as fh:
        header = struct.pack("<4sBIIB", b"AEMB", 1, n, EMBED_DIM, 1)
        header += struct.pack("<I", len(classes))
        fh.write(header)
        done = 0
        started = time.time()
        with torch.no_grad():
            for start in range(0, n, batch_size):
                chunk = samples[start : start + batch_size]
                batch = np.stack([load_patch(path) for path, _ in chunk])
                batch = normalize_batch(batch)
                feats = encoder(torch.from_numpy(batch).to(device))
                feats = feats.cpu().numpy().astype("<f4")
                if feats.shape[1] != EMBED_DIM:
                    raise ShapeError(
                        f"encoder produced width {feats.shape[1]}, expected {EMBED_DIM}"
                    )
                blob = feats.tobytes(order="C")
                fh.write(blob)
                payload_sha.update(blob)
                done += len(chunk)
                if done % (batch_size * 8) < batch_size or done == n:
                    rate = done / max(time.time() - started, 1e-9)
                    print(f"\rencoded {done}/{n} patches ({rate:.1f}/s)", end="", file=sys.stderr)
        label_blob = labels.astype("<u2").tobytes()
        fh.write(label_blob)
        payload_sha.update(label_blob)
    print(file=sys.stderr)

    manifest = {
        "dataset_id": Path(dataset_dir).name,
        "encoder_id": Path(checkpoint).name,
        "encoder_sha256": _file_sha256(checkpoint),
        "preprocessing": "bands in file order; reflectance / 10000, clipped to [0, 1]",
        "sample_order": "class dirs sorted by name, files sorted lexicographically",
        "dim": EMBED_DIM,
        "n": n,
        "classes": classes,
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "payload_sha256": payload_sha.hexdigest(),
    }
    manifest_path = Path(str(out_path) + ".meta.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _file_sha256(path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            sha.update(block)
    return sha.hexdigest()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dataset", required=True, help="EuroSAT_MS directory")
    parser.add_argument("--checkpoint", required=True, help="MoCo ResNet-50 checkpoint")
    parser.add_argument("--out", required=True, help="output AEMB path")
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--device", default="cpu", help="torch device, e.g. cpu or cuda")
    args = parser.parse_args(argv)
    try:
        manifest = export_embeddings(
            args.dataset, args.checkpoint, args.out,
            batch_size=args.batch_size, device=args.device,
        )
    except FetchError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ShapeError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    print(
        f"wrote {args.out}: n={manifest['n']} dim={manifest['dim']} "
        f"classes={len(manifest['classes'])} sha256={manifest['payload_sha256'][:12]}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
