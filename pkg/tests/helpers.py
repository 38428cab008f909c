"""Seeded random operating points shared by the spectral tests."""

import numpy as np

from npgt.graph import build_laplacian, generate_er_wb
from npgt.nonlinearity import LinkNonlinearity, sector_of
from npgt.spectral import assemble


def random_hessians(rng, n, p, indefinite_share=0.3):
    """Symmetric local Hessians whose sum is positive definite.

    Roughly ``indefinite_share`` of the nodes get an indefinite block, so the
    instance is only convex in aggregate.
    """
    while True:
        blocks = []
        for _ in range(n):
            B = rng.normal(size=(p, p))
            S = B @ B.T + 0.5 * np.eye(p)
            if rng.random() < indefinite_share:
                S = S - (np.abs(np.linalg.eigvalsh(S)).max() + 0.5) * np.eye(p) * rng.uniform(0.5, 1.0)
            blocks.append(S)
        blocks = np.array(blocks)
        if np.linalg.eigvalsh(blocks.sum(axis=0)).min() > 0.1:
            return blocks


def random_instance(seed, n_range=(3, 10), p_choices=(1, 2), rho=1 / 128, link_prob=None):
    """ER Laplacian, aggregate-convex Hessians and sector ratios in the exact log-quantizer sector."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    p = int(rng.choice(p_choices))
    prob = rng.uniform(0.3, 0.9) if link_prob is None else link_prob
    L = build_laplacian(generate_er_wb(n, prob, seed=rng))
    H = random_hessians(rng, n, p)
    kappa, K = sector_of(LinkNonlinearity.log_quantize(rho), exact=True)
    xi = rng.uniform(kappa, K, n * p)
    return L, H, xi, kappa, K


def random_matrix(seed, eta=None):
    L, H, xi, kappa, K = random_instance(seed)
    rng = np.random.default_rng([seed, 1])
    eta = float(10 ** rng.uniform(-4, 0.5)) if eta is None else eta
    return assemble(L, H, xi, eta)
