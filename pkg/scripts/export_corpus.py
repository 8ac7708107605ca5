"""Write the regression cases to corpus/ as chart and warp-spec files."""
import argparse
import os

from warpcurv.corpus import export_corpus

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dir", default=os.path.join(ROOT, "corpus"))
    args = ap.parse_args()
    for path in export_corpus(args.dir):
        print(os.path.relpath(path, ROOT))


if __name__ == "__main__":
    main()
