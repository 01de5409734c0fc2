"""Reference spectra: closed forms for balls and rectangles, a finite-difference
solver for everything else in 2D, and the certified upper-bound curve
U(E) = min_k (E_k - E)^2 that any trained loss curve must respect.

Bessel zeros are computed, not tabulated: J_nu is evaluated by Miller backward
recurrence, zeros are bracketed by a sign scan guided by their asymptotic
spacing, then polished by bisection and Newton steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import pi, sqrt

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Annulus, Ball, Domain, Rectangle, Triangle
from .residuals import Potential, potential_eval

BESSEL_TOL = 1e-12
FD_START_SEED = 20_240_601  # fixed seed of the iteration's start vectors
MERGE_RTOL = 1e-8


@dataclass(frozen=True)
class OracleSpectrum:
    """Ascending reference eigenvalues with their provenance."""

    eigenvalues: tuple
    provenance: str            # "closed_form" or "finite_difference"
    domain: dict | None = None
    potential: dict | None = None
    grid_n: int | None = None

    def __post_init__(self):
        vals = tuple(float(v) for v in self.eigenvalues)
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("oracle eigenvalues must be strictly ascending")
        object.__setattr__(self, "eigenvalues", vals)


def _merge(values, rtol=MERGE_RTOL):
    """Collapse multiplicities: ascending values equal within rtol count once."""
    out = []
    for v in sorted(values):
        if not out or v - out[-1] > rtol * max(1.0, abs(v)):
            out.append(v)
    return out


# --- Bessel functions of the first kind, J_nu with 2*nu integer ---

def _bessel_j_pair(nu: float, x: float):
    """(J_nu(x), J_{nu+1}(x)) by Miller backward recurrence.

    Valid for nu >= 0 with 2*nu integer and x > 0; relative accuracy is near
    machine precision for the ranges used here (x up to ~150).
    """
    half = (round(2 * nu) % 2) == 1
    base = 0.5 if half else 0.0
    idx = int(round(nu - base))          # J_nu = f[idx] after normalization
    top = int(max(nu, x) + 1.5 * sqrt(max(nu, x, 1.0)) + 36)
    # downward recurrence on order: f_{k-1} = (2(k+base)/x) f_k - f_{k+1}
    fkp1, fk = 0.0, 1e-280
    f = np.empty(top + 1)
    f[top] = fk
    for k in range(top, 0, -1):
        fkm1 = (2.0 * (k + base) / x) * fk - fkp1
        fkp1, fk = fk, fkm1
        f[k - 1] = fk
        if abs(fk) > 1e250:
            f[k - 1:] /= 1e250
            fkp1 /= 1e250
            fk = f[k - 1]
    if half:
        # normalize against the exact spherical seeds J_1/2, J_3/2
        s = sqrt(2.0 / (pi * x))
        j_half = s * np.sin(x)
        j_3half = s * (np.sin(x) / x - np.cos(x))
        scale = j_half / f[0] if abs(f[0]) >= abs(f[1]) else j_3half / f[1]
        if abs(f[0]) < abs(f[1]) and abs(j_3half) < 1e-300:
            scale = j_half / f[0]
    else:
        # J_0 + 2 (J_2 + J_4 + ...) = 1
        s = f[0] + 2.0 * f[2::2].sum()
        scale = 1.0 / s
    return f[idx] * scale, f[idx + 1] * scale


def bessel_j(nu: float, x: float) -> float:
    """J_nu(x) for nu >= 0 with 2*nu integer."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if 2 * nu != round(2 * nu) or nu < 0:
        raise ValueError("only nonnegative integer and half-integer orders are supported")
    if x == 0.0:
        return 1.0 if nu == 0 else 0.0
    return _bessel_j_pair(nu, x)[0]


def _bessel_j_derivative(nu: float, x: float, pair=None) -> float:
    j, jp1 = pair if pair is not None else _bessel_j_pair(nu, x)
    return (nu / x) * j - jp1


def mcmahon_zero(nu: float, k: int) -> float:
    """McMahon's asymptotic location of the k-th zero of J_nu; used for brackets."""
    beta = (k + 0.5 * nu - 0.25) * pi
    mu = 4.0 * nu * nu
    return beta - (mu - 1) / (8 * beta) - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * beta) ** 3)


def bessel_zero(nu: float, k: int) -> float:
    """k-th positive zero of J_nu to absolute accuracy ~1e-12.

    Zeros are located in order by a sign scan (their spacing exceeds 3 for all
    supported orders, so a unit step cannot skip one), bisected, then polished
    with Newton steps.
    """
    if k < 1 or k > 20:
        raise ValueError("zero index must satisfy 1 <= k <= 20")
    if 2 * nu != round(2 * nu) or nu < 0:
        raise ValueError("only nonnegative integer and half-integer orders are supported")
    x = max(float(nu), 0.5)
    step = 1.0
    found = 0
    fx = bessel_j(nu, x)
    for _ in range(400):
        x2 = x + step
        fx2 = bessel_j(nu, x2)
        if fx == 0.0:
            fx = 1e-300 if fx2 > 0 else -1e-300
        if fx * fx2 < 0.0:
            found += 1
            if found == k:
                return _polish_zero(nu, x, x2)
            # subsequent zeros sit within ~pi..1.6*pi of each other
            x, fx = x2, fx2
        else:
            x, fx = x2, fx2
    raise RuntimeError(f"failed to bracket zero {k} of J_{nu}")  # pragma: no cover


def _polish_zero(nu: float, lo: float, hi: float) -> float:
    flo = bessel_j(nu, lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fmid = bessel_j(nu, mid)
        if flo * fmid <= 0.0:
            hi = mid
        else:
            lo, flo = mid, fmid
        if hi - lo < 1e-6:
            break
    x = 0.5 * (lo + hi)
    for _ in range(8):
        pair = _bessel_j_pair(nu, x)
        dx = pair[0] / _bessel_j_derivative(nu, x, pair)
        x -= dx
        if abs(dx) < BESSEL_TOL:
            break
    if not (lo - 1e-3 <= x <= hi + 1e-3):  # Newton must stay inside the bracket
        x = 0.5 * (lo + hi)
    return x


# --- closed-form spectra ---

def rectangle_spectrum(lengths, count: int) -> OracleSpectrum:
    """Smallest `count` distinct values of pi^2 sum_i (m_i / L_i)^2, m_i >= 1."""
    L = np.asarray(lengths, dtype=float)
    if (L <= 0).any():
        raise ValueError("side lengths must be positive")
    if count < 1:
        raise ValueError("count must be >= 1")
    lam_bar = pi**2 * ((L > 0).sum() / L.min() ** 2)
    while True:
        # all eigenvalues <= lam_bar are generated once m_i reaches this cutoff
        ms = [np.arange(1, int(np.floor(Li * sqrt(lam_bar) / pi)) + 1) for Li in L]
        if all(len(m) > 0 for m in ms):
            grids = np.meshgrid(*ms, indexing="ij")
            vals = pi**2 * sum((g / Li) ** 2 for g, Li in zip(grids, L)).ravel()
            merged = _merge([v for v in vals if v <= lam_bar])
            if len(merged) >= count:
                return OracleSpectrum(tuple(merged[:count]), "closed_form",
                                      domain={"kind": "rectangle", "lengths": L.tolist()},
                                      potential={"kind": "zero"})
        lam_bar *= 2.0


def ball_spectrum(d: int, R: float, count: int) -> OracleSpectrum:
    """Smallest `count` distinct (j_{nu,k}/R)^2 with nu = d/2 - 1 + l."""
    if d not in (2, 3, 4):
        raise ValueError("ball spectra are provided for d in {2, 3, 4}")
    if not R > 0:
        raise ValueError("radius must be positive")
    vals = []
    for ell in range(13):
        nu = d / 2.0 - 1.0 + ell
        for k in range(1, 13):
            vals.append((bessel_zero(nu, k) / R) ** 2)
    merged = _merge(vals)
    if count > len(merged):
        raise ValueError(f"angular/radial cutoff provides only {len(merged)} eigenvalues")
    return OracleSpectrum(tuple(merged[:count]), "closed_form",
                          domain={"kind": "ball", "dim": d, "radius": R},
                          potential={"kind": "zero"})


# --- finite-difference reference for 2D domains ---

def _fd_grid(domain: Domain, grid_n: int):
    box = domain.bounding_box
    axes = [np.linspace(box[i, 0], box[i, 1], grid_n) for i in range(2)]
    h = [(box[i, 1] - box[i, 0]) / (grid_n - 1) for i in range(2)]
    X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    mask = domain.contains(pts).reshape(grid_n, grid_n)
    return pts, mask, h


def _fd_matrix(domain: Domain, potential: Potential, grid_n: int):
    pts, mask, (hx, hy) = _fd_grid(domain, grid_n)
    idx = -np.ones(mask.shape, dtype=np.int64)
    idx[mask] = np.arange(int(mask.sum()))
    m = int(mask.sum())
    if m == 0:
        raise ValueError("no interior grid points; increase grid_n")
    V = potential_eval(potential, pts).reshape(mask.shape)
    rows, cols, vals = [], [], []
    ii, jj = np.nonzero(mask)
    for i, j in zip(ii, jj):
        k = idx[i, j]
        rows.append(k); cols.append(k)
        vals.append(2.0 / hx**2 + 2.0 / hy**2 + V[i, j])
        for di, dj, h in ((1, 0, hx), (-1, 0, hx), (0, 1, hy), (0, -1, hy)):
            a, b = i + di, j + dj
            if 0 <= a < mask.shape[0] and 0 <= b < mask.shape[1] and mask[a, b]:
                rows.append(k); cols.append(idx[a, b])
                vals.append(-1.0 / h**2)
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))


def _deflated_solve(A, sigma, Q, b, maxiter):
    """CG solve of P (A - sigma I) P x = P b with P projecting out columns of Q."""
    def project(v):
        if Q:
            for q in Q:
                v = v - (q @ v) * q
        return v

    def matvec(v):
        v = project(v)
        w = A @ v - sigma * v
        return project(w)

    op = spla.LinearOperator(A.shape, matvec=matvec, dtype=float)
    x, info = spla.cg(op, project(b), rtol=1e-10, atol=0.0, maxiter=maxiter)
    return project(x), info


def _smallest_eigs(A, count_raw: int):
    """Raw smallest eigenvalues by shifted inverse power iteration with deflation."""
    n = A.shape[0]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(FD_START_SEED)))
    found_vals: list[float] = []
    found_vecs: list[np.ndarray] = []
    for k in range(count_raw):
        sigma = 0.0 if k == 0 else 0.95 * found_vals[-1]
        v = rng.standard_normal(n)
        for q in found_vecs:
            v -= (q @ v) * q
        v /= np.linalg.norm(v)
        lam = v @ (A @ v)
        settled = False
        converged = False
        for it in range(200):
            w, info = _deflated_solve(A, sigma, found_vecs, v, maxiter=20 * n)
            if info != 0:
                # retry once with a safer shift before giving up
                sigma = 0.5 * sigma
                w, info = _deflated_solve(A, sigma, found_vecs, v, maxiter=40 * n)
                if info != 0:
                    raise RuntimeError(f"CG failed to converge for eigenvalue {k + 1}")
            nw = np.linalg.norm(w)
            if nw == 0.0:
                raise RuntimeError("inverse iteration collapsed to zero")
            v = w / nw
            lam_new = v @ (A @ v)
            gap = abs(lam_new - lam)
            lam = lam_new
            if settled and it >= 2 and gap <= 1e-10 * max(1.0, abs(lam)):
                converged = True
                break
            if not settled and gap <= 1e-3 * max(1.0, abs(lam)):
                # Rayleigh quotients on the deflated complement never undershoot
                # the target eigenvalue, so this shift stays safely below it
                settled = True
                sigma = 0.95 * lam
        if not converged:
            raise RuntimeError(f"inverse iteration did not converge for eigenvalue {k + 1}")
        found_vals.append(float(lam))
        found_vecs.append(v)
    order = np.argsort(found_vals)
    return [found_vals[i] for i in order]


def fd_spectrum(domain: Domain, potential: Potential, grid_n: int, count: int) -> OracleSpectrum:
    """5-point finite-difference eigenvalues of -Laplacian + V on the masked grid.

    Dirichlet data enters by excluding exterior nodes. The smallest `count`
    distinct eigenvalues are extracted by shifted inverse power iteration with
    Gram-Schmidt deflation; inner solves use conjugate gradients at relative
    residual 1e-10.
    """
    if domain.dim != 2:
        raise ValueError("the finite-difference reference is 2D only")
    if grid_n < 32:
        raise ValueError("grid_n must be >= 32")
    if count < 1:
        raise ValueError("count must be >= 1")
    A = _fd_matrix(domain, potential, grid_n)
    raw_target = count + 2
    while True:
        raw = _smallest_eigs(A, raw_target)
        merged = _merge(raw)
        # the top raw value may still have unmerged companions; only values
        # strictly below it are certainly complete
        usable = [v for v in merged if v < raw[-1] * (1 - MERGE_RTOL)]
        if len(usable) >= count:
            return OracleSpectrum(tuple(usable[:count]), "finite_difference",
                                  domain=domain.describe(), potential=potential.describe(),
                                  grid_n=grid_n)
        raw_target += 2


def spectrum_for(domain: Domain, potential: Potential, count: int,
                 grid_n: int = 128) -> OracleSpectrum:
    """Closed form when one exists (zero potential on balls/rectangles), else FD."""
    if potential.kind == "zero" and isinstance(domain, Ball):
        return ball_spectrum(domain.dim, domain.radius, count)
    if potential.kind == "zero" and isinstance(domain, Rectangle):
        iv = np.asarray(domain.intervals)
        return rectangle_spectrum(iv[:, 1] - iv[:, 0], count)
    if domain.dim != 2:
        raise ValueError("no reference spectrum available: FD oracle is 2D only")
    return fd_spectrum(domain, potential, grid_n, count)


def upper_bound_curve(spectrum: OracleSpectrum, grid):
    """U(E) = min_k (E_k - E)^2 along the grid.

    Warns when the grid extends past the largest provided eigenvalue (the bound
    is not certified there).
    """
    if not spectrum.eigenvalues:
        raise ValueError("spectrum must be nonempty")
    grid = np.asarray(grid, dtype=float)
    ev = np.asarray(spectrum.eigenvalues)
    if grid.size and grid.max() > ev.max():
        warnings.warn("grid extends beyond the largest oracle eigenvalue; "
                      "the upper bound may be loose there", stacklevel=2)
    U = ((ev[None, :] - grid[:, None]) ** 2).min(axis=1)
    return list(zip(grid.tolist(), U.tolist()))
