"""Reduced-rank curl-free field model.

The field is the gradient of a scalar potential,

    m(r) = sum_i grad(psi_i)(r) theta_i,

where the first three potentials are the coordinates ``x, y, z`` (constant
unit fields) and the rest are Dirichlet eigenfunctions of the Laplacian on
an axis-aligned box,

    psi_n(r) = prod_d sqrt(2 / L_d) sin(pi n_d (r_d - lo_d) / L_d),

taken in order of increasing eigenvalue ``sum_d (pi n_d / L_d)^2``.  Each
eigenfunction weight gets a zero-mean Gaussian prior whose variance is the
squared-exponential spectral density of the potential at the mode's
frequency, which makes the model a reduced-rank approximation of a
curl-free Gaussian process.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg

LINEAR_COUNT = 3
_CHUNK = 4096


class OutsideDomainError(ValueError):
    """Point outside the model domain."""


@dataclass(frozen=True)
class BasisFieldModel:
    lo: np.ndarray
    hi: np.ndarray
    n_b: int
    lengthscale: float
    signal_std: float
    modes: np.ndarray  # (n_b - 3, 3) integer mode numbers
    prior_std: np.ndarray  # (n_b,)
    weights: np.ndarray  # (n_b,)
    linear_prior_std: float = 100.0
    linear_count: int = LINEAR_COUNT

    @property
    def domain(self):
        return self.lo, self.hi

    @property
    def size(self):
        return self.hi - self.lo

    @property
    def eigenvalues(self):
        k = np.pi * self.modes / self.size
        return np.sum(k**2, axis=1)

    def with_weights(self, weights):
        w = np.asarray(weights, dtype=float).reshape(self.n_b)
        return replace(self, weights=w)

    def contains(self, r):
        r = np.asarray(r, dtype=float)
        return np.all((r > self.lo) & (r < self.hi), axis=-1)

    def __call__(self, r):
        return evaluate_model(self, r)


def pad_box(box, padding):
    """Grow a ``(lo, hi)`` box by ``padding`` (scalar or per-axis)."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    p = np.broadcast_to(np.asarray(padding, dtype=float), (3,))
    return lo - p, hi + p


def _lowest_modes(size, count):
    """Mode triples with the ``count`` smallest Dirichlet eigenvalues."""
    if count == 0:
        return np.zeros((0, 3), dtype=int)
    base = np.pi / size
    bound = float(np.sum(base**2)) * 4
    while True:
        nmax = np.maximum(1, np.floor(np.sqrt(bound) / base).astype(int))
        grids = np.meshgrid(*(np.arange(1, n + 1) for n in nmax), indexing="ij")
        cand = np.stack([g.ravel() for g in grids], axis=1)
        lam = np.sum((cand * base) ** 2, axis=1)
        inside = lam <= bound
        if inside.sum() >= count:
            break
        bound *= 2
    cand, lam = cand[inside], lam[inside]
    # round so that analytically equal eigenvalues tie, then lexicographic
    key = np.round(lam / lam.max(), 12)
    order = np.lexsort((cand[:, 2], cand[:, 1], cand[:, 0], key))
    return cand[order[:count]]


def se_spectral_density(omega, lengthscale, sigma):
    """3D squared-exponential spectral density at angular frequency ``omega``."""
    l2 = lengthscale**2
    return sigma**2 * (2 * np.pi * l2) ** 1.5 * np.exp(-0.5 * omega**2 * l2)


def build_basis(domain, n_b, lengthscale=0.3, signal_std=5.0, linear_prior_std=100.0):
    """Basis model on the box ``domain = (lo, hi)`` with zero weights.

    ``signal_std`` is the prior standard deviation of each field component;
    the potential's standard deviation is ``signal_std * lengthscale``.
    """
    if n_b < LINEAR_COUNT:
        raise ValueError(f"n_b must be at least {LINEAR_COUNT}, got {n_b}")
    lo, hi = (np.asarray(b, dtype=float).reshape(3) for b in domain)
    if np.any(hi <= lo):
        raise ValueError("domain must have positive extent")
    modes = _lowest_modes(hi - lo, n_b - LINEAR_COUNT)
    omega = np.sqrt(np.sum((np.pi * modes / (hi - lo)) ** 2, axis=1))
    sd = np.sqrt(se_spectral_density(omega, lengthscale, signal_std * lengthscale))
    prior = np.concatenate([np.full(LINEAR_COUNT, linear_prior_std), sd])
    return BasisFieldModel(lo, hi, int(n_b), float(lengthscale), float(signal_std),
                           modes, prior, np.zeros(n_b), float(linear_prior_std))


def _check_inside(model, r):
    if not np.all(model.contains(r)):
        raise OutsideDomainError("query point outside the basis model domain")


def _trig(model, r):
    s = np.asarray(r, dtype=float) - model.lo
    k_axes = [np.pi * np.arange(1, model.modes[:, d].max(initial=1) + 1) / model.size[d]
              for d in range(3)]
    out = []
    for d in range(3):
        arg = s[:, d, None] * k_axes[d]
        idx = model.modes[:, d] - 1
        out.append((np.sin(arg)[:, idx], np.cos(arg)[:, idx], k_axes[d][idx]))
    return out


def _eval_flat(model, r, hessian_weights=None):
    """Basis (P, 3, n_b) and optionally the contracted Hessian (P, 3, 3)."""
    P = len(r)
    norm = np.prod(np.sqrt(2.0 / model.size))
    (sx, cx, kx), (sy, cy, ky), (sz, cz, kz) = _trig(model, r)
    syz = sy * sz
    phi = np.zeros((P, 3, model.n_b))
    phi[:, 0, 0] = phi[:, 1, 1] = phi[:, 2, 2] = 1.0
    phi[:, 0, 3:] = cx * syz * (norm * kx)
    phi[:, 1, 3:] = sx * cy * sz * (norm * ky)
    phi[:, 2, 3:] = sx * sy * cz * (norm * kz)
    if hessian_weights is None:
        return phi
    t = norm * hessian_weights[LINEAR_COUNT:]
    H = np.empty((P, 3, 3))
    diag = (sx * syz) @ np.stack([-kx**2 * t, -ky**2 * t, -kz**2 * t], axis=1)
    H[:, 0, 0], H[:, 1, 1], H[:, 2, 2] = diag.T
    H[:, 0, 1] = H[:, 1, 0] = (cx * cy * sz) @ (kx * ky * t)
    H[:, 0, 2] = H[:, 2, 0] = (cx * sy * cz) @ (kx * kz * t)
    H[:, 1, 2] = H[:, 2, 1] = (sx * cy * cz) @ (ky * kz * t)
    return phi, H


def _field_flat(model, r, weights):
    """``Phi(r) @ weights`` without forming ``Phi``; (P, 3)."""
    norm = np.prod(np.sqrt(2.0 / model.size))
    (sx, cx, kx), (sy, cy, ky), (sz, cz, kz) = _trig(model, r)
    t = norm * weights[LINEAR_COUNT:]
    syz = sy * sz
    out = np.empty((len(r), 3))
    out[:, 0] = (cx * syz) @ (kx * t)
    out[:, 1] = (sx * cy * sz) @ (ky * t)
    out[:, 2] = (sx * sy * cz) @ (kz * t)
    return out + weights[:LINEAR_COUNT]


def field_values(model, r, weights=None, check=True):
    """Field ``Phi(r) @ weights`` at points ``(..., 3)``."""
    r = np.asarray(r, dtype=float)
    if check:
        _check_inside(model, r)
    w = model.weights if weights is None else np.asarray(weights, dtype=float)
    return _field_flat(model, r.reshape(-1, 3), w).reshape(r.shape)


def basis_and_gradient(model, r, weights=None, check=True):
    """Basis matrices and the field Jacobian of ``Phi(r) @ weights``.

    Returns ``(Phi, G)`` with shapes ``(..., 3, n_b)`` and ``(..., 3, 3)``.
    With ``check=False`` points outside the domain are evaluated through the
    odd periodic extension of the eigenfunctions; the smoother relies on
    this for intermediate iterates.
    """
    r = np.asarray(r, dtype=float)
    if check:
        _check_inside(model, r)
    w = model.weights if weights is None else np.asarray(weights, dtype=float)
    flat = r.reshape(-1, 3)
    phi, G = _eval_flat(model, flat, w)
    return (phi.reshape(r.shape[:-1] + (3, model.n_b)),
            G.reshape(r.shape[:-1] + (3, 3)))


def evaluate_basis(model, r):
    """Column ``i`` is the ``i``-th vector basis function at ``r``."""
    r = np.asarray(r, dtype=float)
    _check_inside(model, r)
    flat = r.reshape(-1, 3)
    phi = _eval_flat(model, flat)
    return phi.reshape(r.shape[:-1] + (3, model.n_b))


def evaluate_potentials(model, r):
    """Scalar potentials ``(x, y, z, psi_1, ...)`` at ``r``; mainly for tests."""
    r = np.atleast_2d(np.asarray(r, dtype=float))
    norm = np.prod(np.sqrt(2.0 / model.size))
    (sx, _, _), (sy, _, _), (sz, _, _) = _trig(model, r)
    return np.concatenate([r, norm * sx * sy * sz], axis=1)


def evaluate_model(model, r):
    """Field of the model at ``r`` in uT."""
    r = np.asarray(r, dtype=float)
    flat = r.reshape(-1, 3)
    out = np.empty_like(flat)
    for i in range(0, len(flat), _CHUNK):
        out[i:i + _CHUNK] = evaluate_basis(model, flat[i:i + _CHUNK]) @ model.weights
    return out.reshape(r.shape)


def _as_samples(samples, values=None):
    if values is not None:
        return np.asarray(samples, dtype=float).reshape(-1, 3), np.asarray(values, dtype=float).reshape(-1, 3)
    samples = list(samples)
    if not samples:
        return np.zeros((0, 3)), np.zeros((0, 3))
    pos = np.array([s[0] for s in samples], dtype=float).reshape(-1, 3)
    val = np.array([s[1] for s in samples], dtype=float).reshape(-1, 3)
    return pos, val


def normal_equations(model, positions, values, noise_std):
    """Information matrix and vector of the weight posterior."""
    info = np.diag(model.prior_std**-2.0)
    vec = np.zeros(model.n_b)
    inv_var = 1.0 / noise_std**2
    for i in range(0, len(positions), _CHUNK):
        phi = evaluate_basis(model, positions[i:i + _CHUNK]).reshape(-1, model.n_b)
        y = values[i:i + _CHUNK].reshape(-1)
        info += inv_var * (phi.T @ phi)
        vec += inv_var * (phi.T @ y)
    return info, vec


def fit_weights(model, samples, values=None, noise_std=0.1):
    """Gaussian linear regression of the weights.

    ``samples`` is either a list of ``(r, y)`` pairs or an array of
    positions with ``values`` holding the matching field vectors.  Returns
    the posterior mean and the lower Cholesky factor of the posterior
    information matrix.  Cost is linear in the number of samples and
    quadratic in ``n_b``.
    """
    positions, vals = _as_samples(samples, values)
    if len(positions) == 0:
        raise ValueError("at least one sample is required")
    if noise_std <= 0:
        raise ValueError("noise_std must be positive")
    info, vec = normal_equations(model, positions, vals, noise_std)
    L = linalg.cholesky(info, lower=True)
    theta = linalg.cho_solve((L, True), vec)
    return theta, L


def regression_objective(model, theta, positions, values, noise_std):
    """Negative log posterior (up to a constant) minimized by ``fit_weights``."""
    phi = evaluate_basis(model, positions).reshape(-1, model.n_b)
    res = phi @ theta - np.asarray(values).reshape(-1)
    return 0.5 * np.sum(res**2) / noise_std**2 + 0.5 * np.sum((theta / model.prior_std) ** 2)


def grid_points(box, step):
    """Cell-centred grid over a box; degenerate axes get a single layer."""
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    axes = []
    for a, b in zip(lo, hi):
        n = max(1, int(round((b - a) / step)))
        axes.append(a + (np.arange(n) + 0.5) * (b - a) / n if b > a else np.array([a]))
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([x.ravel() for x in g], axis=1)


def footprint_area(box):
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    return float((hi[0] - lo[0]) * (hi[1] - lo[1]))


def resolution_study(reference, footprint, counts, grid_step=0.05, padding=0.3,
                     lengthscale=0.3, signal_std=5.0, noise_std=0.01):
    """Fit models of increasing size to a reference field on a dense grid.

    ``reference`` is any callable mapping ``(P, 3)`` points to ``(P, 3)``
    field values.  Each model lives on ``footprint`` grown by ``padding`` and
    is fitted to the noiseless grid samples; returns rows
    ``(n_b, basis functions per square metre of footprint, RMSE in uT)``.
    """
    counts = list(counts)
    if not counts:
        raise ValueError("counts must be nonempty")
    if min(counts) < LINEAR_COUNT:
        raise ValueError(f"every count must be at least {LINEAR_COUNT}")
    pts = grid_points(footprint, grid_step)
    ref = np.asarray(reference(pts), dtype=float)
    domain = pad_box(footprint, padding)
    area = footprint_area(footprint)
    rows = []
    for n in counts:
        model = build_basis(domain, n, lengthscale, signal_std)
        theta, _ = fit_weights(model, pts, ref, noise_std=noise_std)
        pred = evaluate_model(model.with_weights(theta), pts)
        rmse = float(np.sqrt(np.mean(np.sum((pred - ref) ** 2, axis=1))))
        rows.append((int(n), n / area, rmse))
    return rows


# ------------------------------------------------------------ serialization

_HEADER_KEYS = ("lo", "hi", "n_b", "lengthscale", "signal_std", "linear_prior_std")


def save_model(model, path):
    """Write a plain-text header followed by CSV weight rows."""
    with open(path, "w") as fh:
        fh.write("# magslam basis model\n")
        fh.write("# lo = " + " ".join(repr(float(x)) for x in model.lo) + "\n")
        fh.write("# hi = " + " ".join(repr(float(x)) for x in model.hi) + "\n")
        fh.write(f"# n_b = {model.n_b}\n")
        fh.write(f"# lengthscale = {model.lengthscale!r}\n")
        fh.write(f"# signal_std = {model.signal_std!r}\n")
        fh.write(f"# linear_prior_std = {model.linear_prior_std!r}\n")
        fh.write("index,weight\n")
        for i, w in enumerate(model.weights):
            fh.write(f"{i},{float(w)!r}\n")


def load_model(path):
    header = {}
    weights = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if sep:
                    header[key.strip()] = value.strip()
            elif line and not line.startswith("index"):
                weights.append(float(line.split(",")[1]))
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise ValueError(f"model file missing header keys: {missing}")
    lo = np.array([float(x) for x in header["lo"].split()])
    hi = np.array([float(x) for x in header["hi"].split()])
    model = build_basis((lo, hi), int(header["n_b"]), float(header["lengthscale"]),
                        float(header["signal_std"]), float(header["linear_prior_std"]))
    if len(weights) != model.n_b:
        raise ValueError("weight count does not match n_b")
    return model.with_weights(np.array(weights))
