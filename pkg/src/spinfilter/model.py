"""Lattice geometry, weighted norms, interaction operators and drift laws.

The state space is a truncated box Lambda = {-N..N}^d of lattice sites with a
fixed lexicographic site indexing.  An interaction operator is a bounded-range
matrix a[gamma, j] acting on site vectors; the drift is a local scalar map
f = f0 + f1 with polynomial dissipative part f0 and linear Lipschitz part f1.
All values defined here are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly


class ConfigurationError(ValueError):
    """Invalid specification (bad dimensions, weights, steps, ...)."""


class SpecValidationError(ValueError):
    """A declared structural property is violated by the actual data."""


class StepError(RuntimeError):
    """Numeric failure inside a time step; carries the step/site context."""

    def __init__(self, message: str, step: int | None = None, site: int | None = None):
        super().__init__(message)
        self.step = step
        self.site = site


class FilterDivergenceError(RuntimeError):
    """All particle weights collapsed; data impossible under the model."""


DEFAULT_DISSIPATIVITY_GRID = (-10.0, 10.0, 1e-3)


# ---------------------------------------------------------------------------
# lattice geometry and weights


@dataclass
class LatticeSpec:
    """Truncated lattice box with a summable site weight.

    d, N        box Lambda = {-N..N}^d, (2N+1)^d sites
    boundary    'periodic' wraps neighbor indices, 'zero' drops them
    weight_kind 'exponential' rho(k) = exp(-kappa*|k|) or
                'polynomial'  rho(k) = 1/(1 + kappa*|k|^r), r > d
    s           growth exponent of the higher-moment state space (int >= 1)
    """

    d: int
    N: int
    boundary: str = "periodic"
    weight_kind: str = "exponential"
    kappa: float = 1.0
    r: float | None = None
    s: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ConfigurationError(f"lattice dimension d must be >= 1, got {self.d}")
        if self.N < 0:
            raise ConfigurationError(f"truncation radius N must be >= 0, got {self.N}")
        if self.boundary not in ("periodic", "zero"):
            raise ConfigurationError(f"boundary must be 'periodic' or 'zero', got {self.boundary!r}")
        if self.weight_kind not in ("exponential", "polynomial"):
            raise ConfigurationError(f"unknown weight_kind {self.weight_kind!r}")
        if self.kappa <= 0:
            raise ConfigurationError(f"weight kappa must be > 0, got {self.kappa}")
        if self.weight_kind == "polynomial":
            if self.r is None or self.r <= self.d:
                raise ConfigurationError(
                    f"polynomial weight requires decay r > d = {self.d}, got r = {self.r}")
        if self.s < 1:
            raise ConfigurationError(f"growth exponent s must be >= 1, got {self.s}")
        side = 2 * self.N + 1
        self._side = side
        coords = np.array(list(itertools.product(range(-self.N, self.N + 1), repeat=self.d)),
                          dtype=np.int64)
        self._sites = coords
        self._weights = self._weight_of(np.linalg.norm(coords, axis=1))

    @property
    def n_sites(self) -> int:
        return self._sites.shape[0]

    @property
    def sites(self) -> np.ndarray:
        """(n_sites, d) array of site coordinates in index order."""
        return self._sites

    @property
    def weights(self) -> np.ndarray:
        """rho(gamma) per site, strictly positive."""
        return self._weights

    def _weight_of(self, dist: np.ndarray) -> np.ndarray:
        if self.weight_kind == "exponential":
            return np.exp(-self.kappa * dist)
        return 1.0 / (1.0 + self.kappa * dist ** self.r)

    def site_index(self, coord) -> int:
        """Index of a coordinate tuple under the fixed lexicographic bijection."""
        side = self._side
        idx = 0
        for c in coord:
            if not -self.N <= c <= self.N:
                raise ConfigurationError(f"coordinate {tuple(coord)} outside the box")
            idx = idx * side + (int(c) + self.N)
        return idx

    def displacement(self, gamma: np.ndarray, j: np.ndarray) -> np.ndarray:
        """Coordinate difference gamma - j, minimal-image under periodic wrap."""
        diff = np.asarray(gamma) - np.asarray(j)
        if self.boundary == "periodic":
            side = self._side
            diff = (diff + self.N) % side - self.N
        return diff

    def neighbor_index(self, coord, axis: int, step: int) -> int | None:
        """Index of coord shifted by step along axis; None if it leaves the box."""
        c = list(coord)
        c[axis] += step
        if self.boundary == "periodic":
            c[axis] = (c[axis] + self.N) % self._side - self.N
        elif not -self.N <= c[axis] <= self.N:
            return None
        return self.site_index(c)


def validate_state(x: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.n_sites:
        raise ConfigurationError(
            f"state has {x.shape[-1]} sites, lattice has {spec.n_sites}")
    if not np.all(np.isfinite(x)):
        raise SpecValidationError("state contains non-finite entries")
    return x


def weighted_norm(x: np.ndarray, spec: LatticeSpec, p: float = 2.0) -> float:
    """l^p_rho norm (sum_gamma rho(gamma) |x_gamma|^p)^(1/p)."""
    if p < 1:
        raise ConfigurationError(f"norm exponent p must be >= 1, got {p}")
    x = np.asarray(x, dtype=float)
    return float(np.sum(spec.weights * np.abs(x) ** p, axis=-1) ** (1.0 / p))


# ---------------------------------------------------------------------------
# interaction operator


@dataclass
class InteractionOperator:
    """Bounded-range site-coupling matrix.

    entries maps (row_site_index, col_site_index) -> coefficient; the dense
    matrix is assembled once.  range_ is the declared maximal coupling
    distance (Euclidean, minimal image on a periodic box).
    """

    spec: LatticeSpec
    entries: dict = field(repr=False)
    range_: float
    matrix: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        n = self.spec.n_sites
        if self.matrix is None:
            m = np.zeros((n, n))
            for (gi, ji), a in self.entries.items():
                m[gi, ji] += a
            self.matrix = m
        self.max_entry = float(np.max(np.abs(self.matrix))) if n else 0.0

    @classmethod
    def from_entries(cls, spec: LatticeSpec, entries: dict, range_: float | None = None):
        """Build from {(gamma_coord, j_coord): a}; infers range if not declared."""
        idx_entries = {}
        max_dist = 0.0
        for (g, j), a in entries.items():
            gi, ji = spec.site_index(g), spec.site_index(j)
            idx_entries[(gi, ji)] = idx_entries.get((gi, ji), 0.0) + float(a)
            disp = spec.displacement(np.asarray(g), np.asarray(j))
            max_dist = max(max_dist, float(np.linalg.norm(disp)))
        if range_ is None:
            range_ = max_dist
        return cls(spec=spec, entries=idx_entries, range_=range_)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """A x for site vectors; batches over leading axes."""
        return np.asarray(x) @ self.matrix.T

    def row_abs_sums(self) -> np.ndarray:
        return np.abs(self.matrix).sum(axis=1)

    def dissipativity_shift(self) -> float:
        """Largest eta with A + eta*I dissipative on plain l2 (= -max eig of sym A)."""
        sym = 0.5 * (self.matrix + self.matrix.T)
        return float(-np.max(np.linalg.eigvalsh(sym)))


def build_discrete_laplacian(spec: LatticeSpec, alpha: float = 0.0) -> InteractionOperator:
    """Nearest-neighbor Laplacian minus alpha: (Ax)_g = sum_{|j-g|=1} x_j - (2d+alpha) x_g.

    Periodic boundary wraps neighbor indices (a single-site box couples to
    itself, so A reduces to -alpha there); zero boundary drops out-of-box
    neighbors.
    """
    if alpha < 0:
        raise ConfigurationError(f"laplacian shift alpha must be >= 0, got {alpha}")
    n = spec.n_sites
    m = np.zeros((n, n))
    diag = -(2.0 * spec.d + alpha)
    for gi, coord in enumerate(spec.sites):
        m[gi, gi] += diag
        for axis in range(spec.d):
            for step in (-1, 1):
                ji = spec.neighbor_index(coord, axis, step)
                if ji is not None:
                    m[gi, ji] += 1.0
    return InteractionOperator(spec=spec, entries={}, range_=1.0, matrix=m)


@dataclass
class HypothesesReport:
    alpha: float
    beta: float
    l2_bound: float
    weight_ratio_bound: float | None
    ok: bool
    messages: list

    def __str__(self):
        status = "ok" if self.ok else "FAILED"
        return (f"hypotheses {status}: alpha={self.alpha:.6g} beta={self.beta:.6g} "
                f"l2_bound={self.l2_bound:.6g}")


def verify_hypotheses(A: InteractionOperator, spec: LatticeSpec) -> HypothesesReport:
    """Check the boundedness conditions on the interaction matrix.

    alpha is the max absolute row sum, beta the smallest constant with
    sum_gamma |a[gamma, j]| rho(gamma) <= beta rho(j) for every column j; the
    induced weighted-l2 norm bound is sqrt(alpha*beta).  For exponential
    weights the ratio rho(gamma)/rho(j) over the declared range is checked
    against exp(kappa*R).
    """
    messages = []
    m = np.abs(A.matrix)
    n = spec.n_sites
    # declared range must dominate every nonzero entry
    coords = spec.sites
    rows, cols = np.nonzero(m)
    for gi, ji in zip(rows, cols):
        disp = spec.displacement(coords[gi], coords[ji])
        dist = float(np.linalg.norm(disp))
        if dist > A.range_ + 1e-12:
            raise SpecValidationError(
                f"entry ({tuple(coords[gi])}, {tuple(coords[ji])}) at distance "
                f"{dist:.3g} violates declared range {A.range_:.3g}")
    alpha = float(m.sum(axis=1).max()) if n else 0.0
    rho = spec.weights
    col = m.T @ rho  # sum_gamma |a[gamma, j]| rho(gamma)
    beta = float(np.max(col / rho)) if n else 0.0
    ratio_bound = None
    if spec.weight_kind == "exponential":
        ratio_bound = float(np.exp(spec.kappa * A.range_))
        if rows.size:
            ratios = rho[rows] / rho[cols]
            worst = float(np.max(ratios))
            if worst > ratio_bound * (1 + 1e-12):
                messages.append(f"weight ratio {worst:.6g} exceeds bound {ratio_bound:.6g}")
    ok = np.isfinite(alpha) and np.isfinite(beta) and not messages
    return HypothesesReport(alpha=alpha, beta=beta, l2_bound=float(np.sqrt(alpha * beta)),
                            weight_ratio_bound=ratio_bound, ok=bool(ok), messages=messages)


# ---------------------------------------------------------------------------
# drift specification


@dataclass
class DriftSpec:
    """Local drift f = f0 + f1 acting sitewise.

    f0_coeffs are ascending polynomial coefficients (c0 + c1 z + c2 z^2 + ...);
    the dissipative regime needs an odd degree with negative leading term.
    f1 is the linear map c*z with Lipschitz constant |c|.  eta is the smallest
    shift making f0 + eta*z non-increasing on the validation grid; s a growth
    exponent with |f0(z)| <= c0_growth (1 + |z|^s) there.
    """

    f0_coeffs: tuple = (0.0,)
    f1_c: float = 0.0
    eta: float | None = None
    s: int | None = None
    grid: tuple = DEFAULT_DISSIPATIVITY_GRID

    def __post_init__(self):
        coeffs = np.trim_zeros(np.asarray(self.f0_coeffs, dtype=float), "b")
        if coeffs.size == 0:
            coeffs = np.array([0.0])
        self.f0_coeffs = tuple(coeffs)
        self._c = np.asarray(self.f0_coeffs)
        self._dc = npoly.polyder(self._c) if self._c.size > 1 else np.array([0.0])
        if self.s is None:
            self.s = max(int(self.degree), 1)
        if self.eta is None:
            rep = check_dissipativity(self, self.grid)
            self.eta = rep.eta_min
        grid = np.arange(self.grid[0], self.grid[1] + self.grid[2], self.grid[2])
        vals = np.abs(self.f0(grid))
        self.c0_growth = float(np.max(vals / (1.0 + np.abs(grid) ** self.s)))

    @property
    def degree(self) -> int:
        return len(self.f0_coeffs) - 1

    @property
    def leading(self) -> float:
        return self.f0_coeffs[-1]

    @property
    def lip_f1(self) -> float:
        return abs(self.f1_c)

    @property
    def is_zero(self) -> bool:
        return self.degree == 0 and self.f0_coeffs[0] == 0.0 and self.f1_c == 0.0

    @property
    def f0_is_zero(self) -> bool:
        return self.degree == 0 and self.f0_coeffs[0] == 0.0

    def f0(self, z):
        return npoly.polyval(np.asarray(z, dtype=float), self._c)

    def f0_prime(self, z):
        return npoly.polyval(np.asarray(z, dtype=float), self._dc)

    def f1(self, z):
        return self.f1_c * np.asarray(z, dtype=float)

    def f(self, z):
        return self.f0(z) + self.f1(z)

    def f_prime(self, z):
        return self.f0_prime(z) + self.f1_c


@dataclass
class DissipativityReport:
    eta_min: float
    ok: bool
    reason: str = ""


def check_dissipativity(drift: DriftSpec, grid: tuple = DEFAULT_DISSIPATIVITY_GRID) -> DissipativityReport:
    """Smallest eta with f0 + eta*z non-increasing on the grid.

    Equivalent to eta >= max f0' there.  ok additionally requires an odd
    polynomial degree with negative leading coefficient (else reported, not
    raised).
    """
    lo, hi, step = grid
    z = np.arange(lo, hi + step, step)
    eta_min = float(np.max(drift.f0_prime(z)))
    deg = drift.degree
    if deg == 0:
        ok = drift.f0_coeffs[0] == 0.0
        reason = "" if ok else "constant nonzero f0"
    elif drift.leading >= 0:
        ok, reason = False, "leading coefficient not negative"
    elif deg % 2 == 0:
        ok, reason = False, "even polynomial degree"
    else:
        ok, reason = True, ""
    return DissipativityReport(eta_min=eta_min, ok=ok, reason=reason)


# ---------------------------------------------------------------------------
# noise specification


@dataclass
class NoiseSpec:
    """Additive noise layout for the signal equation.

    b is a per-site diagonal scaling (scalar broadcasts); with sigma2 set the
    signal noise splits into sigma1*dW1 + sigma2*dZ against an N-channel
    observation noise Z, where sigma1 is per-site and sigma2 has shape
    (n_sites, N).
    """

    b: float | np.ndarray = 1.0
    sigma1: float | np.ndarray | None = None
    sigma2: np.ndarray | None = None

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if np.any(~np.isfinite(b)) or np.any(b < 0):
            raise ConfigurationError("noise scaling b must be finite and nonnegative")
        self.b = b
        if self.sigma1 is not None:
            self.sigma1 = np.atleast_1d(np.asarray(self.sigma1, dtype=float))
        if self.sigma2 is not None:
            s2 = np.asarray(self.sigma2, dtype=float)
            if s2.ndim == 0:
                s2 = s2.reshape(1, 1)
            elif s2.ndim == 1:
                s2 = np.diag(s2)
            self.sigma2 = s2
            if np.all(s2 == 0.0):
                self.sigma2 = None

    @property
    def correlated(self) -> bool:
        return self.sigma2 is not None

    def b_for(self, n_sites: int) -> np.ndarray:
        b = self.b if self.b.size > 1 else np.full(n_sites, self.b[0])
        if b.size != n_sites:
            raise ConfigurationError(f"noise b has {b.size} entries for {n_sites} sites")
        return b

    def sigma1_for(self, n_sites: int) -> np.ndarray:
        if self.sigma1 is None:
            return self.b_for(n_sites)
        s1 = self.sigma1 if self.sigma1.size > 1 else np.full(n_sites, self.sigma1[0])
        if s1.size != n_sites:
            raise ConfigurationError(f"sigma1 has {s1.size} entries for {n_sites} sites")
        return s1

    def validate_channels(self, n_sites: int, n_channels: int):
        if self.sigma2 is not None and self.sigma2.shape != (n_sites, n_channels):
            raise ConfigurationError(
                f"sigma2 shape {self.sigma2.shape} does not match "
                f"(n_sites, n_channels) = ({n_sites}, {n_channels})")


# ---------------------------------------------------------------------------
# assembled model


def apply_drift(x: np.ndarray, A: InteractionOperator, drift: DriftSpec) -> np.ndarray:
    """Full drift A x + f(x) applied sitewise; batches over leading axes."""
    out = A.apply(x) + drift.f(x)
    if not np.all(np.isfinite(out)):
        bad = np.argwhere(~np.isfinite(out))
        site = int(bad[0][-1])
        raise StepError(f"drift overflowed at site {site}", site=site)
    return out


@dataclass
class SpinModel:
    """Lattice spec + interaction + drift + noise, with validation metadata.

    eta_lin is the dissipativity shift of A on plain l2, eta_min the maximal
    slope of f0 on its grid; omega_prior = eta_lin - eta_min - Lip(f1) is the
    guaranteed contraction rate used by the ergodicity harness (positive in
    the provably ergodic regime).
    """

    spec: LatticeSpec
    A: InteractionOperator
    drift: DriftSpec
    noise: NoiseSpec

    def __post_init__(self):
        self.report = verify_hypotheses(self.A, self.spec)
        self.eta_lin = self.A.dissipativity_shift()
        self.eta_min = self.drift.eta
        self.omega_prior = self.eta_lin - self.eta_min - self.drift.lip_f1

    @property
    def n_sites(self) -> int:
        return self.spec.n_sites

    def summary(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "alpha": self.report.alpha,
            "beta": self.report.beta,
            "l2_bound": self.report.l2_bound,
            "eta_lin": self.eta_lin,
            "eta_min": self.eta_min,
            "lip_f1": self.drift.lip_f1,
            "omega_prior": self.omega_prior,
            "hypotheses_ok": self.report.ok,
        }


def scalar_model(a: float = 1.0, drift: DriftSpec | None = None,
                 noise: NoiseSpec | None = None, **lattice_kwargs) -> SpinModel:
    """Single-site model with A = -a (periodic single-site Laplacian shift)."""
    spec = LatticeSpec(d=1, N=0, **lattice_kwargs)
    A = build_discrete_laplacian(spec, alpha=a)
    return SpinModel(spec=spec, A=A,
                     drift=drift if drift is not None else DriftSpec(),
                     noise=noise if noise is not None else NoiseSpec())
