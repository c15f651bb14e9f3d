"""Write the three scalar-envelope tables (intro, fig1, fig2) as CSV.

Usage: python scripts/reproduce_figures.py [out_dir]
"""
import sys
from pathlib import Path

from quadenv.cli import FIGURES, run


def main(out_dir="figures"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(FIGURES):
        code, text = run(["envelope", "--figure", name])
        if code:
            raise SystemExit(code)
        (out / f"{name}.csv").write_text(text)
        print(f"{name}: {len(text.splitlines()) - 1} rows -> {out / (name + '.csv')}")


if __name__ == "__main__":
    main(*sys.argv[1:])
