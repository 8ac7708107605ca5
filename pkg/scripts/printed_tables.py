"""Compare the typeset warped-product displays and coefficient tables with substitution.

For each corpus spec prints the max relative drift of the typeset wedge / S^2
displays from direct computation, then every coefficient-table entry whose
typeset value differs from the substitution-derived one.
"""
import argparse

from warpcurv.classify import ClassifyConfig
from warpcurv.corpus import builtin_cases
from warpcurv.warped import verify_assembly


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=10)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    cfg = ClassifyConfig(points=args.points, seed=args.seed)
    for case in builtin_cases():
        if case.spec is None:
            continue
        rep = verify_assembly(case.spec, cfg)
        drift = ", ".join(f"{k} {v:.2e}" for k, v in rep.printed_display_deviations.items())
        print(f"{case.name}: typeset display drift: {drift}")
        for w in rep.table_cross_check_warnings:
            print(f"    {w}")


if __name__ == "__main__":
    main()
