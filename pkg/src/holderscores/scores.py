"""Composite score families, their divergences and empirical forms.

A composite score S(f, g) compares a data density f with a candidate g and is
minimized over g at g = f.  The families implemented here are all built from
two quadrature moments, the cross term ``<f g^gamma>`` and the power term
``<g^(1+gamma)>`` (the Kullback-Leibler score uses ``<-f log g>`` and ``<g>``
instead):

========================  =====================================================
KL                         <-f log g + g>
DensityPower(gamma)        <g^(1+gamma)> - (1+gamma)/gamma * <f g^gamma>
Pseudospherical(gamma)     -<f g^gamma> / <g^(1+gamma)>^(gamma/(1+gamma))
GammaScore(gamma)          -(1/gamma) * log(-Pseudospherical)
HolderScore(phi)           phi(<f g^gamma> / <g^(1+gamma)>) * <g^(1+gamma)>
BregmanHolder(gamma,kappa) <g^(1+gamma)>^(kappa/(1+gamma))
                               * (1 - 1/kappa - <f g^gamma>/<g^(1+gamma)>)
========================  =====================================================

The Holder family is parameterized by a shape function phi with phi(1) = -1
and phi(z) >= -z^(1+gamma); Holder's inequality then makes the associated
divergence D(f, g) = S(f, g) - S(f, f) nonnegative.  Because the quadrature
moments are weighted sums, the inequality (hence nonnegativity) holds for the
discrete values as well, not merely in the continuum limit.

Empirical forms replace the cross term with a sample average, which is what
the optimum-score estimators in :mod:`holderscores.estimators` minimize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DegenerateInputError, DomainError
from .grids import GridDensity, cross_moment, integrate, power_moment
from .models import render_density
from .rng import rng_for

_FD_STEP = 1e-5


# -- shape functions -----------------------------------------------------------

@dataclass(frozen=True)
class PhiFunction:
    """Shape function phi: R+ -> R with its first two derivatives.

    ``value`` must satisfy phi(1) = -1 and phi(z) >= -z^(1+gamma) on z >= 0.
    ``d1``/``d2`` may be omitted, in which case central finite differences of
    ``value`` (step 1e-5) stand in; analytic derivatives are preferred because
    the redescending criterion evaluates the curvature exactly at z = 1.
    ``kinks`` lists points where the derivatives are invalid (several shape
    functions are non-smooth at one interior point).
    """

    gamma: float
    value: Callable
    d1: Optional[Callable] = None
    d2: Optional[Callable] = None
    label: str = "phi"
    kinks: tuple = ()

    def __post_init__(self):
        if self.gamma <= 0:
            raise DomainError("phi requires gamma > 0")
        if self.d1 is None:
            v = self.value
            object.__setattr__(self, "d1",
                               lambda z: (v(z + _FD_STEP) - v(z - _FD_STEP)) / (2 * _FD_STEP))
        if self.d2 is None:
            v = self.value
            object.__setattr__(self, "d2",
                               lambda z: (v(z + _FD_STEP) - 2.0 * v(z) + v(z - _FD_STEP))
                               / _FD_STEP ** 2)

    def __call__(self, z):
        return self.value(z)


def phi_kappa(gamma, kappa):
    """The kappa-indexed shape function of the Bregman-compatible subfamily.

    phi(z) = -kappa^((1+gamma)/kappa) |z - 1 + 1/kappa|^((1+gamma)/kappa)
             * sign(z - 1 + 1/kappa)

    kappa = 1 gives phi(z) = -z^(1+gamma) (the gamma-score shape, the lower
    bound itself); kappa = 1 + gamma matches the density power score.  The
    curvature at the anchor is phi''(1) = -gamma(1+gamma) + (kappa-1)(1+gamma),
    so only kappa = 1 meets the redescending condition.
    """
    if gamma <= 0:
        raise DomainError("phi_kappa requires gamma > 0")
    if kappa < 1:
        raise DomainError("phi_kappa requires kappa >= 1")
    a = (1.0 + gamma) / kappa
    c = kappa ** a
    shift = 1.0 - 1.0 / kappa

    def value(z):
        w = np.asarray(z, dtype=float) - shift
        return -c * np.abs(w) ** a * np.sign(w)

    def d1(z):
        w = np.asarray(z, dtype=float) - shift
        with np.errstate(divide="ignore"):
            return -c * a * np.abs(w) ** (a - 1.0)

    def d2(z):
        w = np.asarray(z, dtype=float) - shift
        with np.errstate(divide="ignore", invalid="ignore"):
            return -c * a * (a - 1.0) * np.abs(w) ** (a - 2.0) * np.sign(w)

    kinks = (shift,) if kappa > 1 else ()
    return PhiFunction(gamma=gamma, value=value, d1=d1, d2=d2,
                       label=f"kappa({gamma:g},{kappa:g})", kinks=kinks)


def phi_linear(gamma):
    """phi(z) = gamma - (1+gamma) z; the density-power-equivalent shape."""
    if gamma <= 0:
        raise DomainError("phi_linear requires gamma > 0")
    return PhiFunction(
        gamma=gamma,
        value=lambda z: gamma - (1.0 + gamma) * np.asarray(z, dtype=float),
        d1=lambda z: np.full_like(np.asarray(z, dtype=float), -(1.0 + gamma)),
        d2=lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        label=f"linear({gamma:g})")


def phi_gamma_score(gamma):
    """phi(z) = -z^(1+gamma); equivalent to the gamma-score."""
    return phi_kappa(gamma, 1.0)


def phi_cubic_tail(gamma, c=0.5):
    """Gamma-score shape plus a one-sided cubic bump c * max(z-1, 0)^3.

    For c >= 0 the lower bound is preserved, and the perturbation leaves
    phi(1), phi'(1) and phi''(1) untouched, so the resulting estimator is
    still redescending with the same limiting influence behavior.
    """
    if c < 0:
        raise DomainError("cubic tail coefficient must be nonnegative")
    base = phi_kappa(gamma, 1.0)

    def relu(z):
        return np.clip(np.asarray(z, dtype=float) - 1.0, 0.0, None)

    return PhiFunction(
        gamma=gamma,
        value=lambda z: base.value(z) + c * relu(z) ** 3,
        d1=lambda z: base.d1(z) + 3.0 * c * relu(z) ** 2,
        d2=lambda z: base.d2(z) + 6.0 * c * relu(z),
        label=f"cubic-tail({gamma:g},{c:g})")


_PHI_BUILTINS = {
    "kappa": lambda gamma, kappa=1.0, **kw: phi_kappa(gamma, kappa),
    "gamma-score": lambda gamma, **kw: phi_gamma_score(gamma),
    "linear": lambda gamma, **kw: phi_linear(gamma),
    "cubic-tail": lambda gamma, c=0.5, **kw: phi_cubic_tail(gamma, c),
}


# -- score families --------------------------------------------------------------

@dataclass(frozen=True)
class ScoreValue:
    """One score comparison: S(f,g), the entropy S(f,f) and their gap."""

    s_fg: float
    s_ff: float
    divergence: float


class CompositeScore:
    """Base class for the score families.

    Subclasses provide ``_combine(cross, g_power)`` mapping the two moments
    of the target to the score value; the KL family overrides the entry
    points because it uses logarithmic moments.
    """

    name = "composite"
    #: exponent e with h(sigma, mu) = |det sigma|^-e for the families whose
    #: divergence-scale law is exact; None means "estimate empirically".
    affine_scale_exponent = None

    def __init__(self, gamma):
        if gamma <= 0:
            raise DomainError(f"{self.name} requires gamma > 0")
        self.gamma = float(gamma)

    def __repr__(self):
        return f"{self.__class__.__name__}(gamma={self.gamma:g})"

    def _combine(self, cross, g_power):
        raise NotImplementedError

    # target moments -----------------------------------------------------------

    def _target_grid(self, g, like=None):
        if isinstance(g, GridDensity):
            return g
        model, theta = g
        if like is None:
            return render_density(model, theta)
        # share the reference grid so cross terms are well defined
        return render_density(model, theta, lo=like.domain_lo, hi=like.domain_hi,
                              points_per_axis=like.points_per_axis)

    def _target_values_at(self, g, points):
        if isinstance(g, GridDensity):
            return g.evaluate(points)
        model, theta = g
        return model.density(np.asarray(theta, dtype=float), points)

    # entry points ---------------------------------------------------------------

    def expected(self, f, g):
        """Population score S(f, g) for grid densities on a shared grid."""
        grid_g = self._target_grid(g, like=f)
        g_power = power_moment(grid_g, 1.0 + self.gamma)
        if g_power <= 0.0:
            raise DegenerateInputError(f"<g^(1+gamma)> = {g_power}; target carries no mass")
        cross = cross_moment(f, grid_g, self.gamma)
        return self._combine(cross, g_power)

    def empirical(self, sample, g):
        """Empirical score with the cross term replaced by a sample mean."""
        vals = self._target_values_at(g, sample.points)
        grid_g = self._target_grid(g)
        g_power = power_moment(grid_g, 1.0 + self.gamma)
        if g_power <= 0.0:
            raise DegenerateInputError(f"<g^(1+gamma)> = {g_power}; target carries no mass")
        cross = float(np.mean(vals ** self.gamma))
        return self._combine(cross, g_power)


class KL(CompositeScore):
    """Kullback-Leibler score <-f log g + g>; the gamma -> 0 member."""

    name = "kl"
    affine_scale_exponent = 0.0

    def __init__(self):
        self.gamma = 0.0

    def __repr__(self):
        return "KL()"

    def expected(self, f, g):
        grid_g = self._target_grid(g, like=f)
        mask = f.values > 0
        if np.any(grid_g.values[mask] == 0.0):
            return math.inf  # f puts mass where g has none: infinite divergence
        cross = float(np.sum(np.where(
            mask, -f.values * np.log(np.where(mask, grid_g.values, 1.0)), 0.0) * f.weights))
        return cross + integrate(grid_g)

    def empirical(self, sample, g):
        vals = self._target_values_at(g, sample.points)
        if np.any(vals <= 0.0):
            return math.inf
        return float(np.mean(-np.log(vals))) + integrate(self._target_grid(g))


class DensityPower(CompositeScore):
    """Density power score, the separable Bregman member of the family."""

    name = "density-power"

    def _combine(self, cross, g_power):
        return g_power - (1.0 + self.gamma) / self.gamma * cross


class Pseudospherical(CompositeScore):
    """Pseudospherical score -<f g^gamma> / <g^(1+gamma)>^(gamma/(1+gamma))."""

    name = "pseudospherical"

    def _combine(self, cross, g_power):
        return -cross / g_power ** (self.gamma / (1.0 + self.gamma))


class GammaScore(CompositeScore):
    """Gamma-score -(1/gamma) log(-pseudospherical score).

    When the pseudospherical value is not negative (disjoint supports), the
    logarithm is undefined and the score signals +inf rather than raising:
    probability densities with common support never reach that branch.
    """

    name = "gamma"

    def _combine(self, cross, g_power):
        ps = -cross / g_power ** (self.gamma / (1.0 + self.gamma))
        if ps >= 0.0:
            return math.inf
        return -math.log(-ps) / self.gamma


class HolderScore(CompositeScore):
    """Holder score phi(<f g^gamma>/<g^(1+gamma)>) * <g^(1+gamma)>."""

    name = "holder"

    def __init__(self, phi):
        if not isinstance(phi, PhiFunction):
            raise ConfigError("HolderScore expects a PhiFunction")
        super().__init__(phi.gamma)
        self.phi = phi

    @property
    def affine_scale_exponent(self):
        return self.gamma

    def __repr__(self):
        return f"HolderScore(gamma={self.gamma:g}, phi={self.phi.label})"

    def _combine(self, cross, g_power):
        return float(self.phi.value(cross / g_power)) * g_power


class BregmanHolder(CompositeScore):
    """The Bregman-form member with potential <f^(1+gamma)>^(kappa/(1+gamma)).

    Equivalent in probability to ``HolderScore(phi_kappa(gamma, kappa))``
    through the strictly increasing map given by
    :func:`bregman_to_holder_value`; kappa = 1 reproduces the pseudospherical
    score exactly and kappa = 1 + gamma the density power score up to scale.
    """

    name = "bregman-holder"

    def __init__(self, gamma, kappa):
        super().__init__(gamma)
        if kappa < 1:
            raise DomainError("bregman-holder requires kappa >= 1")
        self.kappa = float(kappa)

    def __repr__(self):
        return f"BregmanHolder(gamma={self.gamma:g}, kappa={self.kappa:g})"

    def _combine(self, cross, g_power):
        return g_power ** (self.kappa / (1.0 + self.gamma)) * \
            (1.0 - 1.0 / self.kappa - cross / g_power)


def bregman_to_holder_value(value, gamma, kappa):
    """Map a BregmanHolder score value onto the matching Holder score value.

    xi(x) = kappa^((1+gamma)/kappa) |x|^((1+gamma)/kappa) sign(x) is strictly
    increasing, and xi(BregmanHolder(gamma, kappa)) equals
    HolderScore(phi_kappa(gamma, kappa)) identically; the two code paths are
    cross-checked in the test suite at 1e-10 relative tolerance.
    """
    a = (1.0 + gamma) / kappa
    x = np.asarray(value, dtype=float)
    return kappa ** a * np.abs(x) ** a * np.sign(x)


# -- free-function API -----------------------------------------------------------

def expected_score(score, f, g):
    """Population score S(f, g); see the family table in the module docstring."""
    return score.expected(f, g)


def divergence(score, f, g):
    """D(f, g) = S(f, g) - S(f, f) together with both score values.

    Nonnegative for every family; zero at g = f.  For normalized inputs a
    positive gap certifies that f and g differ.
    """
    s_fg = score.expected(f, g)
    s_ff = score.expected(f, f)
    return ScoreValue(s_fg=s_fg, s_ff=s_ff, divergence=s_fg - s_ff)


def empirical_score(score, sample, g):
    """Empirical score of a target g against observed points.

    ``g`` is either a :class:`GridDensity` or a ``(model, theta)`` pair; in
    the latter case the power integral runs over the model's quadrature box
    and the sample values use the analytic density.
    """
    return score.empirical(sample, g)


# -- phi validation ----------------------------------------------------------------

@dataclass(frozen=True)
class PhiValidationReport:
    """Outcome of the lattice scan of a shape function."""

    passed: bool
    anchor_error: float
    violations: tuple
    z_max: float
    n_test: int

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        lines = [f"{verdict}: anchor |phi(1)+1| = {self.anchor_error:.3e}, "
                 f"{len(self.violations)} bound violations on [0, {self.z_max:g}]"]
        for z, gap in self.violations[:10]:
            lines.append(f"  phi({z:.6g}) below -z^(1+gamma) by {gap:.3e}")
        return "\n".join(lines)


def validate_phi(phi, z_max=10.0, n_test=10000, tol=1e-12):
    """Scan a shape function for the anchor and lower-bound conditions.

    Checks phi(1) = -1 and phi(z) >= -z^(1+gamma) on a lattice of ``n_test``
    points covering [0, z_max]; any violation beyond ``tol`` is reported.
    """
    if z_max <= 1.0:
        raise DomainError("z_max must exceed 1 so the lattice crosses the anchor")
    z = np.linspace(0.0, z_max, int(n_test))
    vals = np.asarray(phi.value(z), dtype=float)
    bound = -z ** (1.0 + phi.gamma)
    deficit = bound - vals
    bad = np.nonzero(deficit > tol)[0]
    violations = tuple((float(z[i]), float(deficit[i])) for i in bad)
    anchor_error = abs(float(phi.value(1.0)) + 1.0)
    passed = anchor_error <= tol and not violations
    return PhiValidationReport(passed=passed, anchor_error=anchor_error,
                               violations=violations, z_max=float(z_max),
                               n_test=int(n_test))


# -- equivalence-in-probability check ------------------------------------------------

@dataclass(frozen=True)
class EquivalenceReport:
    """Order-agreement outcome over sampled (p, q, q') triples."""

    trials: int
    violations: int
    passed: bool
    examples: tuple

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict}: {self.violations} order disagreements "
                f"in {self.trials} sampled triples")


def _random_grid_density(rng, lo=-10.0, hi=10.0, n=1201):
    """A random normalized density: Gaussian or two-bump mixture on [lo, hi]."""
    x = np.linspace(lo, hi, n)
    m = rng.uniform(-2.0, 2.0)
    s = rng.uniform(0.6, 2.0)
    vals = np.exp(-0.5 * ((x - m) / s) ** 2)
    if rng.random() < 0.5:
        m2 = rng.uniform(-3.0, 3.0)
        s2 = rng.uniform(0.6, 2.0)
        w = rng.uniform(0.2, 0.8)
        vals = w * vals / (s * np.sqrt(2 * np.pi)) \
            + (1 - w) * np.exp(-0.5 * ((x - m2) / s2) ** 2) / (s2 * np.sqrt(2 * np.pi))
    return GridDensity(np.array([lo]), np.array([hi]), vals).normalize()


def check_equivalence_in_probability(score_a, score_b, trials=200, seed=0):
    """Monotone-relabel test: do two families rank candidate fits identically?

    Equivalence in probability only demands a strictly increasing map between
    the two scores on probability densities; its testable consequence is that
    for random triples (p, q, q') the orderings of S(p, q) versus S(p, q')
    agree.  Ties below 1e-12 relative are treated as order-neutral.
    """
    rng = rng_for(seed)
    violations = []
    for _ in range(int(trials)):
        p = _random_grid_density(rng)
        q = _random_grid_density(rng)
        q2 = _random_grid_density(rng)
        da = score_a.expected(p, q) - score_a.expected(p, q2)
        db = score_b.expected(p, q) - score_b.expected(p, q2)
        scale_a = abs(score_a.expected(p, q)) + abs(score_a.expected(p, q2))
        scale_b = abs(score_b.expected(p, q)) + abs(score_b.expected(p, q2))
        sa = 0 if abs(da) <= 1e-12 * max(scale_a, 1.0) else int(np.sign(da))
        sb = 0 if abs(db) <= 1e-12 * max(scale_b, 1.0) else int(np.sign(db))
        if sa != 0 and sb != 0 and sa != sb:
            violations.append((da, db))
    return EquivalenceReport(trials=int(trials), violations=len(violations),
                             passed=not violations, examples=tuple(violations[:5]))


# -- config mapping ----------------------------------------------------------------

def score_from_config(cfg):
    """Build a score from flat config keys: family, gamma, kappa, phi, c.

    ``family`` is one of kl, density-power, pseudospherical, gamma, holder,
    bregman-holder; the holder family additionally needs ``phi`` (a builtin
    shape name: kappa, gamma-score, linear, cubic-tail).
    """
    family = str(cfg.get("family", "")).strip().lower()
    if not family:
        raise ConfigError("score config needs a 'family' key")
    if family == "kl":
        return KL()
    try:
        gamma = float(cfg["gamma"])
    except KeyError:
        raise ConfigError(f"family {family!r} needs a 'gamma' key") from None
    if family == "density-power":
        return DensityPower(gamma)
    if family == "pseudospherical":
        return Pseudospherical(gamma)
    if family == "gamma":
        return GammaScore(gamma)
    if family == "bregman-holder":
        try:
            kappa = float(cfg["kappa"])
        except KeyError:
            raise ConfigError("bregman-holder needs a 'kappa' key") from None
        return BregmanHolder(gamma, kappa)
    if family == "holder":
        phi_name = str(cfg.get("phi", "")).strip().lower()
        if phi_name not in _PHI_BUILTINS:
            raise ConfigError(f"unknown phi builtin {phi_name!r}; choose from "
                              f"{sorted(_PHI_BUILTINS)}")
        kwargs = {}
        if "kappa" in cfg:
            kwargs["kappa"] = float(cfg["kappa"])
        if "c" in cfg:
            kwargs["c"] = float(cfg["c"])
        return HolderScore(_PHI_BUILTINS[phi_name](gamma, **kwargs))
    raise ConfigError(f"unknown score family {family!r}")
