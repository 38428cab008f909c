"""
Odd, sign-preserving, sector-bounded link nonlinearities.

Three kinds are supported: ``identity``, ``log_quantize`` (multiplicative-grid
rounding of magnitudes with level ``rho``) and ``clip`` (saturation at ``c``,
only sector-bounded on a finite state domain ``|z| <= z_max``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("identity", "log_quantize", "clip")
SECTOR_SLACK = 1e-12


def round_half_away(u):
    return np.sign(u) * np.floor(np.abs(u) + 0.5)


@dataclass(frozen=True)
class LinkNonlinearity:
    kind: str = "identity"
    rho: float | None = None
    c: float | None = None
    z_max: float = math.inf

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "log_quantize" and not (self.rho and self.rho > 0):
            raise ValueError("log_quantize needs rho > 0")
        if self.kind == "clip" and not (self.c and self.c > 0):
            raise ValueError("clip needs a saturation level c > 0")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def log_quantize(cls, rho: float):
        return cls("log_quantize", rho=rho)

    @classmethod
    def clip(cls, c: float, z_max: float = math.inf):
        return cls("clip", c=c, z_max=z_max)

    def __call__(self, z):
        return apply(self, z)

    def to_json(self) -> dict:
        doc = {"kind": self.kind}
        if self.kind == "log_quantize":
            doc["rho"] = self.rho
        elif self.kind == "clip":
            doc["c"] = self.c
            doc["z_max"] = None if math.isinf(self.z_max) else self.z_max
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "LinkNonlinearity":
        kind = doc.get("kind", "identity")
        if kind == "log_quantize":
            return cls.log_quantize(doc["rho"])
        if kind == "clip":
            z_max = doc.get("z_max")
            return cls.clip(doc["c"], math.inf if z_max is None else z_max)
        return cls(kind)


def apply(h: LinkNonlinearity, z):
    """Evaluate ``h`` componentwise; ``h(0) = 0``."""
    z = np.asarray(z, dtype=float)
    if h.kind == "identity":
        out = z.copy()
    elif h.kind == "clip":
        out = np.clip(z, -h.c, h.c)
    else:
        # log(0) = -inf flows through to exp(-inf) = 0
        with np.errstate(divide="ignore"):
            levels = round_half_away(np.log(np.abs(z)) / h.rho)
        out = np.copysign(np.exp(h.rho * levels), z)
    return out if out.ndim else float(out)


def sector_of(h: LinkNonlinearity, exact: bool = False) -> tuple[float, float]:
    """Sector slopes ``(kappa, K)`` with ``kappa <= h(z)/z <= K``.

    For log quantization the default is the first-order pair ``1 -/+ rho/2``;
    ``exact=True`` returns the tight ``exp(-/+ rho/2)``.
    """
    if h.kind == "identity":
        return 1.0, 1.0
    if h.kind == "log_quantize":
        if exact:
            return math.exp(-h.rho / 2), math.exp(h.rho / 2)
        return 1 - h.rho / 2, 1 + h.rho / 2
    if math.isinf(h.z_max):
        raise ValueError("clip has no positive lower sector slope without a finite z_max")
    return min(1.0, h.c / h.z_max), 1.0


def xi_ratio(h: LinkNonlinearity, z):
    """``h(z)/z`` componentwise, with the limit value 1 at ``z = 0``."""
    z = np.asarray(z, dtype=float)
    hz = np.asarray(apply(h, z))
    out = np.ones_like(z)
    nz = z != 0
    out[nz] = hz[nz] / z[nz]
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SectorCheck:
    ok: bool
    kappa: float
    K: float
    witness: float | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def _domain(h: LinkNonlinearity, z_range):
    if z_range is not None:
        return z_range
    if math.isinf(h.z_max):
        return 1e-6, 1e6
    return h.z_max * 1e-6, h.z_max


def verify_sector(h: LinkNonlinearity, sample_count: int = 100_000, rng_seed=None,
                  z_range: tuple[float, float] | None = None, exact: bool = True) -> SectorCheck:
    """Sample ``|z|`` log-uniformly (both signs) and test the sector assumption.

    Checks oddness, sign preservation, monotonicity and the sector slopes
    (``exact`` selects the tight log-quantizer bounds).  On failure the first
    offending ``z`` is returned as ``witness``.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    kappa, K = sector_of(h, exact=exact)
    lo, hi = _domain(h, z_range)
    rng = np.random.default_rng(rng_seed)
    mag = np.exp(rng.uniform(math.log(lo), math.log(hi), sample_count))
    z = mag * rng.choice([-1.0, 1.0], sample_count)

    hz = np.asarray(apply(h, z))
    checks = [
        ("sector", (hz / z < kappa - SECTOR_SLACK) | (hz / z > K + SECTOR_SLACK)),
        ("odd", np.asarray(apply(h, -z)) != -hz),
        ("sign", z * hz <= 0),
    ]
    for reason, bad in checks:
        if bad.any():
            return SectorCheck(False, kappa, K, float(z[np.argmax(bad)]), reason)
    if apply(h, 0.0) != 0.0:
        return SectorCheck(False, kappa, K, 0.0, "sign")
    order = np.argsort(z)
    drops = np.diff(hz[order]) < 0
    if drops.any():
        return SectorCheck(False, kappa, K, float(z[order][np.argmax(drops) + 1]), "monotone")
    return SectorCheck(True, kappa, K)
