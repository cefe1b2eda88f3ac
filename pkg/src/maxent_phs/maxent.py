"""Maximum-entropy equilibrium on an accessible set.

Multipliers follow the convention ``p*(m) ∝ exp(Σ λ_i F_i(m) / k)`` with
``λ_i = -∂S/∂F̄_i``, so a canonical system has ``λ_energy = -1/T``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

from ._numerics import logsumexp
from .errors import (
    NoConvergence,
    SingularCovariance,
    TargetOutOfRange,
    UndefinedTemperature,
    ZeroProbability,
)
from .microstate import AccessibleSet, Microstate

BOLTZMANN = 1.380649e-23


@dataclass(frozen=True)
class InfoConstant:
    """Entropy unit ``k``; the matching logarithm base is ``exp(1/k)``."""

    k: float = 1.0

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError(f"k must be positive and finite, got {self.k}")

    @classmethod
    def from_base(cls, b: float) -> "InfoConstant":
        if not b > 1:
            raise ValueError("logarithm base must exceed 1")
        return cls(1.0 / math.log(b))

    @property
    def base(self) -> float:
        return math.exp(1.0 / self.k)


def _k(k) -> float:
    if isinstance(k, InfoConstant):
        return k.k
    return InfoConstant(float(k)).k


class Distribution:
    """Probability vector over an accessible set, held as log-probabilities."""

    def __init__(self, log_probs, support: AccessibleSet | None = None):
        log_probs = np.array(log_probs, dtype=float)
        if log_probs.ndim != 1 or log_probs.size == 0:
            raise ValueError("log_probs must be a non-empty vector")
        if support is not None and support.omega != log_probs.size:
            raise ValueError("distribution length differs from the support size")
        log_probs.setflags(write=False)
        self.log_probs = log_probs
        self.support = support

    @classmethod
    def from_probs(cls, probs, support: AccessibleSet | None = None, atol=1e-12):
        probs = np.asarray(probs, dtype=float)
        if np.any(probs < 0) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(np.sum(probs) - 1.0) > atol:
            raise ValueError(f"probabilities sum to {np.sum(probs)!r}, not 1")
        with np.errstate(divide="ignore"):
            return cls(np.log(probs), support)

    @classmethod
    def uniform(cls, n: int, support: AccessibleSet | None = None):
        dist = cls(np.full(n, -math.log(n)), support)
        # exact 1/n rather than exp(-ln n), which can be off by an ulp
        probs = np.full(n, 1.0 / n)
        probs.setflags(write=False)
        dist.__dict__["probs"] = probs
        return dist

    @cached_property
    def probs(self) -> np.ndarray:
        p = np.exp(self.log_probs)
        p.setflags(write=False)
        return p

    def __len__(self):
        return self.log_probs.size

    def index_of(self, m) -> int:
        if isinstance(m, Microstate):
            if self.support is None:
                raise ValueError("distribution has no support to look microstates up in")
            return self.support.microstates.index(m)
        return int(m)

    def expectation(self, values) -> float:
        return float(np.sum(self.probs * np.asarray(values, dtype=float)))


def surprisal(p: Distribution, m, k=1.0) -> float:
    """``k ln(1/p(m))`` for a microstate or its index."""
    i = p.index_of(m)
    if p.probs[i] <= 0.0:
        raise ZeroProbability(f"microstate {m!r} has zero probability")
    return -_k(k) * float(p.log_probs[i])


def statistical_entropy(p: Distribution, k=1.0) -> float:
    """``-k Σ p ln p`` with ``0 ln 0 = 0``."""
    log_probs = p.log_probs
    if np.all(log_probs == log_probs[0]):
        # uniform: the sum is exactly ln(1/p), i.e. k ln Ω without rounding
        return -_k(k) * float(log_probs[0])
    probs = p.probs
    nz = probs > 0
    return -_k(k) * float(np.sum(probs[nz] * log_probs[nz]))


def _exponents(aset: AccessibleSet, lambdas: Mapping[str, float], k: float) -> np.ndarray:
    a = np.zeros(aset.omega)
    for label, lam in lambdas.items():
        if not math.isfinite(lam):
            raise ValueError(f"multiplier {label!r} is not finite")
        if lam != 0.0:
            a = a + (lam / k) * aset.column(label)
    return a


def log_partition(aset: AccessibleSet, lambdas: Mapping[str, float], k=1.0) -> float:
    """``k ln Σ_m exp(Σ_i λ_i F_i(m) / k)`` computed with a max shift."""
    k = _k(k)
    lse, _ = logsumexp(_exponents(aset, lambdas, k))
    return k * lse


def boltzmann_distribution(aset: AccessibleSet, lambdas: Mapping[str, float], k=1.0) -> Distribution:
    k = _k(k)
    a = _exponents(aset, lambdas, k)
    lse, _ = logsumexp(a)
    return Distribution(a - lse, aset)


# --------------------------------------------------------------------------
# multiplier solver


@dataclass(frozen=True)
class EquilibriumSolution:
    """Converged maximum-entropy state for a set of free targets.

    ``log_partition`` is ``k ln Z`` and ``entropy`` the statistical entropy of
    ``distribution``.
    """

    lambdas: Mapping[str, float]
    log_partition: float
    distribution: Distribution
    entropy: float
    targets: Mapping[str, float]
    residuals: Mapping[str, float]
    k: float = 1.0
    tol: float = 1e-10
    iterations: int = 0
    method: str = "newton"
    decrements: tuple = ()
    hessian_min_eigs: tuple = ()

    @property
    def support(self) -> AccessibleSet:
        return self.distribution.support

    def to_dict(self, include_probs=False, max_probs=1 << 16) -> dict:
        out = {
            "k": self.k,
            "lambdas": dict(self.lambdas),
            "targets": dict(self.targets),
            "log_partition": self.log_partition,
            "entropy": self.entropy,
            "residuals": dict(self.residuals),
            "iterations": self.iterations,
            "method": self.method,
            "omega": len(self.distribution),
        }
        if include_probs:
            if len(self.distribution) > max_probs:
                raise ValueError(f"{len(self.distribution)} probabilities exceed max_probs={max_probs}")
            out["probs"] = self.distribution.probs.tolist()
        return out

    def to_json(self, include_probs=False, max_probs=1 << 16, **kwargs) -> str:
        return json.dumps(self.to_dict(include_probs, max_probs), **kwargs)


def thermodynamic_entropy(sol: EquilibriumSolution) -> float:
    """Entropy as the Legendre transform ``k ln Z - Σ λ_i F̄_i``."""
    return sol.log_partition - sum(sol.lambdas[lab] * sol.targets[lab] for lab in sol.targets)


class _Problem:
    """Scaled dual objective ``ψ(x) = ln Σ exp(G x)`` with ``G = (F - t) / s``.

    ``λ_i = k x_i / s_i``; ``∇ψ = E[G]`` and ``∇²ψ = Cov(G)``.
    """

    def __init__(self, F, t, scale):
        self.G = (F - t) / scale

    def evaluate(self, x):
        a = self.G @ x
        psi, w = logsumexp(a)
        mean = w @ self.G
        return psi, w, mean

    def hessian(self, w, mean):
        Gc = self.G - mean
        return (Gc * w[:, None]).T @ Gc

    def psi(self, x):
        return logsumexp(self.G @ x)[0]


def _residuals_ok(mean, scale, t, tol):
    # max(1, |t|) alone is vacuous for functions in physical units (~1e-21 J)
    bound = np.minimum(np.maximum(1.0, np.abs(t)), np.maximum(scale, np.abs(t)))
    return np.all(np.abs(mean) * scale <= tol * bound)


def _check_affine_independence(F, labels):
    Fc = F - F.mean(axis=0)
    std = np.sqrt(np.mean(Fc * Fc, axis=0))
    C = (Fc / std).T @ (Fc / std) / F.shape[0]
    eigval, eigvec = np.linalg.eigh(C)
    if eigval[0] <= 1e-12 * max(1.0, eigval[-1]):
        v = eigvec[:, 0] / std
        v = v / np.max(np.abs(v))
        combination = {lab: float(c) for lab, c in zip(labels, v) if abs(c) > 1e-9}
        raise SingularCovariance(
            "free functions are affinely dependent on the accessible set: "
            + " + ".join(f"{c:.6g}*{lab}" for lab, c in combination.items()) + " = const",
            combination=combination)


def _strictly_interior(F, t) -> bool:
    """Whether ``t`` lies in the relative interior of the convex hull of the rows of ``F``."""
    from scipy.optimize import linprog

    n_states, n = F.shape
    # variables: p (n_states), s; maximize s with p_m >= s
    c = np.zeros(n_states + 1)
    c[-1] = -1.0
    A_eq = np.zeros((n + 1, n_states + 1))
    A_eq[:n, :n_states] = F.T
    A_eq[n, :n_states] = 1.0
    b_eq = np.concatenate([t, [1.0]])
    A_ub = np.hstack([-np.eye(n_states), np.ones((n_states, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n_states), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * n_states + [(None, None)], method="highs")
    return bool(res.status == 0 and -res.fun > 1e-12 / n_states)


def _newton(problem, x, scale, t, tol, max_iter, record):
    polish_left = 3
    for it in range(max_iter):
        psi, w, mean = problem.evaluate(x)
        H = problem.hessian(w, mean)
        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            return x, it, False
        eig_min = float(np.linalg.eigvalsh(H)[0])
        if eig_min <= 1e-14 * max(1.0, float(np.max(np.diag(H)))):
            return x, it, False
        d = -np.linalg.solve(L.T, np.linalg.solve(L, mean))
        decrement = float(-(mean @ d))
        record["decrements"].append(decrement)
        record["eigs"].append(eig_min)
        if _residuals_ok(mean, scale, t, tol):
            if polish_left == 0 or decrement < 1e-30:
                return x, it, True
            polish_left -= 1
        slope = mean @ d
        alpha = 1.0
        # inside the quadratic-convergence region the full step is taken;
        # ψ differences there are below rounding and cannot drive a line search
        while decrement > 1e-3:
            x_new = x + alpha * d
            if problem.psi(x_new) <= psi + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                psi_new = problem.psi(x_new)
                if psi_new <= psi:
                    break
                return x, it, _residuals_ok(mean, scale, t, tol)
        x = x + alpha * d
    _, _, mean = problem.evaluate(x)
    return x, max_iter, bool(_residuals_ok(mean, scale, t, tol))


def _coordinate_bisection(problem, x, scale, t, tol, max_sweeps):
    """Cyclic 1-D root finding on each component of ``E[G] = 0``."""
    for sweep in range(max_sweeps):
        for i in range(x.size):
            def g(xi):
                y = x.copy()
                y[i] = xi
                return problem.evaluate(y)[2][i]

            lo, hi = x[i] - 1.0, x[i] + 1.0
            step = 1.0
            while g(lo) > 0:
                step *= 2
                lo -= step
                if step > 1e6:
                    raise TargetOutOfRange("multiplier diverges during bisection")
            step = 1.0
            while g(hi) < 0:
                step *= 2
                hi += step
                if step > 1e6:
                    raise TargetOutOfRange("multiplier diverges during bisection")
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if mid in (lo, hi):
                    break
                if g(mid) < 0:
                    lo = mid
                else:
                    hi = mid
            x[i] = 0.5 * (lo + hi)
        if _residuals_ok(problem.evaluate(x)[2], scale, t, tol):
            return x, sweep + 1, True
    return x, max_sweeps, False


def solve_multipliers(aset: AccessibleSet, targets: Mapping[str, float], k=1.0, tol: float = 1e-10,
                      max_iter: int = 200, initial: Mapping[str, float] | None = None
                      ) -> EquilibriumSolution:
    """Multipliers whose Boltzmann distribution reproduces the free ``targets``.

    Damped Newton on the convex dual with a coordinate bisection fallback.
    Functions constant on the set get a zero multiplier.
    """
    k = _k(k)
    labels = list(targets)
    t_all = {lab: float(targets[lab]) for lab in labels}
    lambdas = {lab: 0.0 for lab in labels}
    active = []
    for lab in labels:
        col = aset.column(lab)
        lo, hi, t = float(np.min(col)), float(np.max(col)), t_all[lab]
        if not math.isfinite(t):
            raise TargetOutOfRange(f"target {lab!r} is not finite")
        # relative to the values themselves: physical units can be ~1e-21
        if hi - lo <= 1e-12 * max(abs(lo), abs(hi)):
            if abs(t - lo) > tol * max(1.0, abs(t)):
                raise TargetOutOfRange(
                    f"{lab!r} is constant {lo!r} on the accessible set, target {t!r} is unattainable")
            continue
        if not lo < t < hi:
            raise TargetOutOfRange(
                f"target {lab}={t!r} is not strictly inside the attainable range [{lo!r}, {hi!r}]")
        active.append(lab)

    record = {"decrements": [], "eigs": []}
    iterations, method = 0, "trivial"
    if active:
        F = aset.matrix(active)
        t = np.array([t_all[lab] for lab in active])
        if len(active) > 1:
            _check_affine_independence(F, active)
        scale = np.std(F, axis=0)
        problem = _Problem(F, t, scale)
        x = np.zeros(len(active))
        if initial:
            x = np.array([float(initial.get(lab, 0.0)) * s / k for lab, s in zip(active, scale)])
        x, iterations, ok = _newton(problem, x, scale, t, tol, max_iter, record)
        method = "newton"
        if not ok:
            if len(active) > 1 and F.shape[0] <= 20000 and not _strictly_interior(F, t):
                raise TargetOutOfRange("targets lie on the boundary of the attainable convex hull")
            x, sweeps, ok = _coordinate_bisection(problem, x, scale, t, tol, max_iter)
            iterations += sweeps
            method = "bisection"
            if not ok:
                raise NoConvergence(f"multiplier solve did not converge in {max_iter} iterations")
        for lab, xi, s in zip(active, x, scale):
            lambdas[lab] = float(k * xi / s)

    dist = boltzmann_distribution(aset, lambdas, k)
    lnz = log_partition(aset, lambdas, k)
    residuals = {lab: abs(dist.expectation(aset.column(lab)) - t_all[lab]) for lab in labels}
    return EquilibriumSolution(
        lambdas=MappingProxyType(lambdas),
        log_partition=lnz,
        distribution=dist,
        entropy=statistical_entropy(dist, k),
        targets=MappingProxyType(t_all),
        residuals=MappingProxyType(residuals),
        k=k,
        tol=tol,
        iterations=iterations,
        method=method,
        decrements=tuple(record["decrements"]),
        hessian_min_eigs=tuple(record["eigs"]),
    )


# --------------------------------------------------------------------------
# derived checks and quantities


@dataclass(frozen=True)
class GradientCheckReport:
    lambdas: Mapping[str, float]
    finite_differences: Mapping[str, float]
    errors: Mapping[str, float]
    rtol: float

    @property
    def passed(self) -> bool:
        return all(e <= self.rtol for e in self.errors.values())


def multiplier_gradient_check(sol: EquilibriumSolution,
                              entropy_fn: Callable[[Mapping[str, float]], float] | None = None,
                              h: float = 1e-5, rtol: float = 1e-4, floor: float = 1e-6
                              ) -> GradientCheckReport:
    """Compare ``-∂S/∂F̄_i`` by central differences with the multipliers.

    The step for target ``i`` is ``h * max(1, |F̄_i|)``; the error is
    ``|fd + λ_i| / max(|λ_i|, floor)``.  By default the entropy is recomputed
    by re-solving on the same accessible set.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if entropy_fn is None:
        def entropy_fn(targets):
            return solve_multipliers(sol.support, targets, sol.k, sol.tol,
                                     initial=sol.lambdas).entropy
    fds, errors = {}, {}
    for lab, t in sol.targets.items():
        step = h * max(1.0, abs(t))
        up = dict(sol.targets)
        down = dict(sol.targets)
        up[lab] = t + step
        down[lab] = t - step
        fd = (entropy_fn(up) - entropy_fn(down)) / (2 * step)
        lam = sol.lambdas[lab]
        fds[lab] = -fd
        errors[lab] = abs(fd + lam) / max(abs(lam), floor)
    return GradientCheckReport(dict(sol.lambdas), fds, errors, rtol)


def intensive_quantities(sol: EquilibriumSolution, energy="energy", count="count",
                         volume="volume") -> dict:
    """Temperature, chemical potential and pressure from the multipliers.

    ``T = -1/λ_energy``, ``mu = λ_count T``, ``P = -λ_volume T``; quantities
    whose function is not free are omitted.
    """
    if energy not in sol.lambdas:
        raise UndefinedTemperature(f"energy label {energy!r} is not a free function")
    lam_e = sol.lambdas[energy]
    if lam_e == 0.0:
        raise UndefinedTemperature("energy multiplier is zero")
    T = -1.0 / lam_e
    out = {"T": T}
    if count in sol.lambdas:
        out["mu"] = sol.lambdas[count] * T
    if volume in sol.lambdas:
        out["P"] = -sol.lambdas[volume] * T
    return out
