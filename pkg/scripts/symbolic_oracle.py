"""Recompute the frozen Riemann values used in tests/test_tensor.py with sympy.

The metric and point match ``SKEW3`` / ``SKEW3_POINT``; output is the six
canonical ``R_ijkl`` classes (0-based) in the package's sign convention.
"""
import sympy as sp


def main():
    x1, x2, x3 = X = sp.symbols("x1 x2 x3")
    g = sp.Matrix([[1 + x1**2, x2 * x3 / 5, 0],
                   [x2 * x3 / 5, 2 + sp.sin(x1), x1 / 10],
                   [0, x1 / 10, sp.exp(x2)]])
    gi = g.inv()
    n = 3
    gam = [[[sum(gi[i, l] * (sp.diff(g[l, j], X[k]) + sp.diff(g[l, k], X[j]) - sp.diff(g[j, k], X[l]))
                 for l in range(n)) / 2 for k in range(n)] for j in range(n)] for i in range(n)]
    point = {x1: sp.Rational(3, 10), x2: sp.Rational(7, 10), x3: sp.Rational(-2, 5)}

    def rup(l, i, j, k):
        return (sp.diff(gam[l][i][k], X[j]) - sp.diff(gam[l][i][j], X[k])
                + sum(gam[m][i][k] * gam[l][m][j] - gam[m][i][j] * gam[l][m][k] for m in range(n)))

    gp = g.subs(point)
    for c in [(0, 1, 0, 1), (0, 1, 0, 2), (0, 1, 1, 2), (0, 2, 0, 2), (0, 2, 1, 2), (1, 2, 1, 2)]:
        h, i, j, k = c
        value = sum(gp[h, l] * rup(l, i, j, k).subs(point) for l in range(n))
        print(c, sp.N(value, 20))


if __name__ == "__main__":
    main()
