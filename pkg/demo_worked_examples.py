#!/usr/bin/env python3
"""
Worked Examples Demo

Walks through the small schemes: exact DoF, phase ledgers and one simulated
run per scheme.
"""

from retroalign import simulate
from retroalign.dof_analysis import ICFD, ICSF, XFD, asymptote, dof_of, mu_star, nu_star
from retroalign.schemes import build_policy

def print_ledger(policy):
    """Print the scaled phase ledger of a policy."""
    print(f"  {'phase':<18} {'runs':>5} {'in':>6} {'slots':>6} {'out':>6}")
    for name, runs, ledger in policy.ledger_rows():
        print(f"  {name:<18} {runs:>5} {ledger.consumed:>6} {ledger.slots:>6} {ledger.produced:>6}")
    print(f"  total: {policy.total_symbols()} symbols in {policy.total_slots()} slots "
          f"-> {policy.expected_dof()}")

def demo_interference_channel():
    """Three- and four-user interference channel schemes."""
    print("=" * 60)
    print("INTERFERENCE CHANNEL")
    print("=" * 60)

    for K in (3, 4, 5):
        print(f"\nK = {K}: mu = {mu_star(K)}, nu = {nu_star(K)}")
        for name in ("icfd", "icof", "icsf"):
            report = simulate(name, K, seed=1)
            mark = "✓" if report.ok and report.matches_analytic else "✗"
            print(f"  {name}: analytic {report.analytic_dof}, simulated {report.empirical_dof} {mark}")

    print("\nFull-duplex ledger, K = 5:")
    print_ledger(build_policy(ICFD, 5))
    print("\nShannon-feedback ledger, K = 5:")
    print_ledger(build_policy(ICSF, 5))

def demo_x_channel():
    """Full-duplex and feedback X channels."""
    print("\n" + "=" * 60)
    print("X CHANNEL")
    print("=" * 60)

    for name, K, M in (("xfd", 2, 2), ("xfd", 3, 3), ("xof", 3, None), ("xsf", 3, None)):
        report = simulate(name, K, M, seed=2)
        mark = "✓" if report.ok and report.matches_analytic else "✗"
        print(f"  {name} K={K}: {report.symbols_injected} symbols in {report.slots_used} slots "
              f"= {report.empirical_dof} {mark}")

    print("\nFull-duplex 3x3 ledger:")
    print_ledger(build_policy(XFD, 3, 3))

def demo_limits():
    """Large-K behaviour."""
    print("\n" + "=" * 60)
    print("LIMITS")
    print("=" * 60)
    print(f"  icfd -> {asymptote(ICFD)}, icfd(200) = {float(dof_of(ICFD, 200)):.6f}")
    for M in (2, 3):
        print(f"  xfd M={M} -> {float(asymptote(XFD, M)):.6f}, "
              f"xfd(M={M}, K=200) = {float(dof_of(XFD, 200, M)):.6f}")
    print(f"  xfd wide -> {float(asymptote(XFD)):.6f}")

if __name__ == "__main__":
    demo_interference_channel()
    demo_x_channel()
    demo_limits()
