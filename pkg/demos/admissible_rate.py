"""The admissible step-rate and the eigenstructure it certifies.

The bound on eta shrinks like gap^(np), so for ten nodes it is tiny.  At that
rate the eigenvalues that leave zero have moved less than any sensible zero
tolerance, and the system behaves like pure consensus.  At the practical rate
eta = 2 the structure (p zero eigenvalues, the rest stable) is clearly visible.
"""

import numpy as np

from npgt import (
    admissible_eta,
    build_schedule,
    build_suite,
    default_config,
    spectral_at_start,
)


def main():
    cfg = default_config("regression")
    suite, _ = build_suite(cfg)
    schedule = build_schedule(cfg)
    h = cfg.nonlinearity()
    eta_bar = admissible_eta(cfg, suite, schedule, h)
    print(f"admissible eta for n={suite.n}, p={suite.p}: {eta_bar:.3e}")
    for eta in (eta_bar, 1e-3, 2.0):
        doc = spectral_at_start(suite, schedule, h, eta)
        ev = np.array([complex(*z) for z in doc["eigenvalues"]])
        smallest = np.sort(np.abs(ev))[:2 * suite.p]
        print(f"eta={eta:.3e}: zero/LHP/RHP = {doc['zero_count']}/{doc['lhp_count']}/{doc['rhp_count']}, "
              f"smallest |lambda| = {', '.join(f'{v:.1e}' for v in smallest)}")


if __name__ == "__main__":
    main()
