"""Command-line entry: ``fairver-export export --model F.h5
[--data D.csv | --schema S.json] --out N.json``."""

from __future__ import annotations

import argparse
import json
import sys

from .export import ExportError, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fairver-export",
        description="convert HDF5 dense ReLU classifiers to the portable format",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="convert one model")
    p.add_argument("--model", required=True, help=".h5 model file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV dataset sample for attribute bounds")
    src.add_argument("--schema", help="JSON schema file with attribute bounds")
    p.add_argument("--out", required=True, help="portable model output path")
    p.add_argument("--manifest", help="also write the conversion manifest here")
    args = parser.parse_args(argv)
    try:
        manifest = export(
            args.model, args.out, data_path=args.data, schema_path=args.schema
        )
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {manifest.out_path}")
    print(f"output activation: {manifest.output_activation}")
    print(
        "layers: "
        + ", ".join(f"{name} -> {idx}" for name, idx in manifest.layer_map)
    )
    if args.manifest:
        with open(args.manifest, "w") as fh:
            json.dump(manifest.to_doc(), fh, indent=2)
            fh.write("\n")
        print(f"manifest: {args.manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
