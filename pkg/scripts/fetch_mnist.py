"""Extract the four MNIST IDX files from the ``MNIST_dir`` wheel on PyPI.

    python scripts/fetch_mnist.py --out data/mnist              # runs pip download
    python scripts/fetch_mnist.py --wheel MNIST_dir-0.2.0-py3-none-any.whl --out data/mnist

The wheel is a plain zip archive, so no network access is needed when a
local copy is given. Each extracted file is checked with the IDX parser.
"""
import argparse
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

from ltcsnn.data import MNIST_FILES, parse_idx

PACKAGE = "MNIST_dir==0.2.0"


def download_wheel(dest: Path) -> Path:
    subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary", ":all:",
                    "-d", str(dest), PACKAGE], check=True)
    wheels = sorted(dest.glob("*.whl"))
    if not wheels:
        raise SystemExit("pip download produced no wheel")
    return wheels[0]


def extract(wheel: Path, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as zf:
        names = [n for n in zf.namelist() if not n.startswith("__MACOSX")]
        for fname in MNIST_FILES.values():
            match = [n for n in names if n.endswith("/" + fname) or n == fname]
            if not match:
                raise SystemExit(f"{fname} not found in {wheel}")
            data = zf.read(match[0])
            arr = parse_idx(data, scale=False)
            (out / fname).write_bytes(data)
            print(f"{fname}: shape {arr.shape}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--wheel", type=Path, help="local wheel; downloaded with pip when omitted")
    ap.add_argument("--out", type=Path, default=Path("data/mnist"))
    args = ap.parse_args()
    if args.wheel:
        extract(args.wheel, args.out)
    else:
        with tempfile.TemporaryDirectory() as tmp:
            extract(download_wheel(Path(tmp)), args.out)
    print(f"MNIST ready in {args.out} (set LTC_DATA_DIR={args.out.resolve()} or pass data_dir)")


if __name__ == "__main__":
    main()
