"""mlcb-plot: render one summary panel to an image file."""

from __future__ import annotations

import argparse

from .render import PANELS, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mlcb-plot")
    parser.add_argument("--summary", required=True, help="summary.json produced by mlcb run")
    parser.add_argument("--panel", required=True, choices=PANELS)
    parser.add_argument("--out", required=True, help="output image path (.png or .svg)")
    args = parser.parse_args(argv)
    path = render(args.summary, args.panel, args.out)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
