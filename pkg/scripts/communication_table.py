#!/usr/bin/env python
"""
Print the per-iteration communication cost of every method

For each dimension d and p-norm block size b, lists the upload and broadcast
bits of one iteration and the reduction against sending 2·32d bits per link.

Usage:
    python scripts/communication_table.py --dims 512,1024 --blocks 256,512
"""

import argparse
import sys
import os

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import pandas as pd

from app.compression import FLOAT_BITS, bit_cost
from app.models import CompressorSpec, Method
from app.presets import method_compressors, get_preset


def communication_rows(dims, blocks, topk_ratio: float = 0.25):
    """One row per (d, b, method) with bits per iteration and link"""
    template = get_preset("ridge-small")
    rows = []
    for d in dims:
        for b in blocks:
            preset = template.model_copy(update={
                "worker_compressor": CompressorSpec.pnorm("inf", b),
                "master_compressor": CompressorSpec.pnorm("inf", b),
                "topk_ratio": topk_ratio,
            })
            for method in Method:
                worker, master = method_compressors(preset, method)
                upload = bit_cost(worker, d)
                broadcast = bit_cost(master, d)
                rows.append({
                    "d": d,
                    "block_size": b,
                    "method": method.value,
                    "upload_bits": upload,
                    "broadcast_bits": broadcast,
                    "upload_ratio": FLOAT_BITS * d / upload,
                    "reduction": 1.0 - (upload + broadcast) / (2.0 * FLOAT_BITS * d),
                })
    return pd.DataFrame(rows)


def main():
    parser = argparse.ArgumentParser(description="Per-iteration communication cost table")
    parser.add_argument("--dims", default="512", help="Comma-separated dimensions")
    parser.add_argument("--blocks", default="256,512", help="Comma-separated p-norm block sizes")
    parser.add_argument("--csv", default=None, help="Also write the table to this CSV file")
    args = parser.parse_args()

    dims = [int(value) for value in args.dims.split(",")]
    blocks = [int(value) for value in args.blocks.split(",")]
    table = communication_rows(dims, blocks)

    print("=" * 60)
    print("Communication cost per iteration")
    print("=" * 60)
    print(table.to_string(index=False, float_format=lambda value: f"{value:.4f}"))
    if args.csv:
        table.to_csv(args.csv, index=False)
        print(f"\n✅ Written to {args.csv}")


if __name__ == "__main__":
    main()
