"""Synthetic ground-truth magnetic field: homogeneous background plus dipoles.

Dipole fields are computed in SI units and reported in microtesla.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

MU0_OVER_4PI = 1e-7  # T m / A
TESLA_TO_UT = 1e6


class FieldDomainError(ValueError):
    """Query point too close to a dipole source."""


@dataclass(frozen=True)
class DipoleSource:
    position: np.ndarray  # m
    moment: np.ndarray  # A m^2

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        m = np.asarray(self.moment, dtype=float).reshape(3)
        if not np.all(np.isfinite(p)):
            raise ValueError("dipole position must be finite")
        if not np.all(np.isfinite(m)) or not np.any(m):
            raise ValueError("dipole moment must be finite and nonzero")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "moment", m)


@dataclass(frozen=True)
class GroundTruthField:
    background: np.ndarray = dc_field(default_factory=lambda: np.array([20.0, 0.0, 44.0]))
    sources: tuple = ()
    exclusion_radius: float = 0.1
    seed: int | None = None

    def __post_init__(self):
        b = np.asarray(self.background, dtype=float).reshape(3)
        if not 10.0 <= np.linalg.norm(b) <= 100.0:
            raise ValueError("background magnitude must lie in [10, 100] uT")
        object.__setattr__(self, "background", b)
        object.__setattr__(self, "sources", tuple(self.sources))

    @property
    def positions(self):
        if not self.sources:
            return np.zeros((0, 3))
        return np.stack([s.position for s in self.sources])

    @property
    def moments(self):
        if not self.sources:
            return np.zeros((0, 3))
        return np.stack([s.moment for s in self.sources])

    def __call__(self, r):
        return evaluate_field(self, r)


def _offsets(field, r):
    r = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("query point must be finite")
    d = r[..., None, :] - field.positions  # (..., K, 3)
    rho = np.linalg.norm(d, axis=-1)
    if rho.size and rho.min() < field.exclusion_radius:
        raise FieldDomainError(
            f"query within {field.exclusion_radius} m of a dipole source (distance {rho.min():.3g} m)"
        )
    return d, rho


def evaluate_field(field, r):
    """Field in uT at point(s) ``r`` (shape ``(..., 3)``)."""
    d, rho = _offsets(field, r)
    m = field.moments
    md = np.einsum("...kj,kj->...k", d, m)
    inv3 = rho**-3
    inv5 = rho**-5
    b = 3 * d * (md * inv5)[..., None] - m * inv3[..., None]
    total = MU0_OVER_4PI * TESLA_TO_UT * b.sum(axis=-2)
    return field.background + total


def field_jacobian(field, r):
    """Spatial derivative ``dB_i / dr_j`` in uT/m at point(s) ``r``."""
    d, rho = _offsets(field, r)
    m = field.moments
    md = np.einsum("...kj,kj->...k", d, m)
    inv5 = rho**-5
    inv7 = rho**-7
    eye = np.eye(3)
    outer = lambda a, b: a[..., :, None] * b[..., None, :]
    J = (
        3 * inv5[..., None, None] * (md[..., None, None] * eye + outer(d, m) + outer(m, d))
        - 15 * (md * inv7)[..., None, None] * outer(d, d)
    )
    return MU0_OVER_4PI * TESLA_TO_UT * J.sum(axis=-3)


def field_variation(field, points):
    """Peak-to-peak range of the field magnitude over ``points``."""
    mag = np.linalg.norm(evaluate_field(field, points), axis=-1)
    return float(mag.max() - mag.min())


def _box(volume):
    lo, hi = (np.asarray(v, dtype=float).reshape(3) for v in volume)
    if np.any(hi - lo <= 0):
        raise ValueError("box must have positive extent along every axis")
    return lo, hi


def sample_sources(count, volume, moment_scale, seed, keep_out=None, margin=0.3):
    """Draw ``count`` dipoles uniformly in ``volume`` outside a keep-out box.

    ``volume`` and ``keep_out`` are ``(lo, hi)`` corner pairs.  Sources are
    rejected within ``margin`` of the keep-out box, so any query inside the
    keep-out box is at least ``margin`` from every source.  Moment
    directions are isotropic with magnitudes log-uniform in
    ``[0.5, 2] * moment_scale``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    lo, hi = _box(volume)
    rng = np.random.default_rng(seed)
    if keep_out is not None:
        klo, khi = _box(keep_out)
        klo, khi = klo - margin, khi + margin
    sources = []
    tries = 0
    while len(sources) < count:
        tries += 1
        if tries > 1000 * count:
            raise ValueError("could not place sources outside the keep-out box")
        p = rng.uniform(lo, hi)
        if keep_out is not None and np.all(p > klo) and np.all(p < khi):
            continue
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        magnitude = moment_scale * np.exp(rng.uniform(np.log(0.5), np.log(2.0)))
        sources.append(DipoleSource(p, magnitude * direction))
    return sources


def make_field(count=40, moment_scale=1.0, seed=0, background=(20.0, 0.0, 44.0),
               volume=((-2.5, -2.5, -1.0), (2.5, 2.5, 2.0)), keep_out=None,
               margin=0.3, exclusion_radius=0.1):
    sources = sample_sources(count, volume, moment_scale, seed, keep_out=keep_out, margin=margin)
    return GroundTruthField(np.asarray(background, dtype=float), tuple(sources),
                            exclusion_radius, seed)


# ------------------------------------------------------------ serialization


def field_to_text(field):
    """Plain-text block: background, exclusion radius, seed, one row per source."""
    lines = ["[field]"]
    lines.append("background = " + " ".join(repr(float(x)) for x in field.background))
    lines.append(f"exclusion_radius = {field.exclusion_radius!r}")
    lines.append(f"seed = {field.seed if field.seed is not None else ''}")
    lines.append(f"sources = {len(field.sources)}")
    lines.append("# px py pz mx my mz")
    for s in field.sources:
        lines.append(" ".join(repr(float(x)) for x in (*s.position, *s.moment)))
    return "\n".join(lines) + "\n"


def field_from_text(text):
    header = {}
    rows = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or line == "[field]":
            continue
        if "=" in line:
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
        else:
            rows.append([float(x) for x in line.split()])
    n = int(header["sources"])
    if len(rows) != n:
        raise ValueError(f"expected {n} source rows, found {len(rows)}")
    sources = tuple(DipoleSource(np.array(r[:3]), np.array(r[3:])) for r in rows)
    seed = header.get("seed", "")
    return GroundTruthField(
        np.array([float(x) for x in header["background"].split()]),
        sources,
        float(header["exclusion_radius"]),
        int(seed) if seed else None,
    )


@dataclass(frozen=True)
class LinearField:
    """Homogeneous field plus a constant symmetric, trace-free gradient."""

    background: np.ndarray
    gradient: np.ndarray
    origin: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        G = np.asarray(self.gradient, dtype=float).reshape(3, 3)
        scale = max(np.abs(G).max(), 1e-300)
        if np.abs(G - G.T).max() > 1e-12 * scale or abs(np.trace(G)) > 1e-12 * scale:
            raise ValueError("gradient must be symmetric and trace-free")
        object.__setattr__(self, "gradient", G)
        object.__setattr__(self, "background", np.asarray(self.background, dtype=float).reshape(3))
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))

    def __call__(self, r):
        d = np.asarray(r, dtype=float) - self.origin
        return self.background + d @ self.gradient.T

    def jacobian(self, r):
        r = np.asarray(r, dtype=float)
        return np.broadcast_to(self.gradient, r.shape[:-1] + (3, 3)).copy()
