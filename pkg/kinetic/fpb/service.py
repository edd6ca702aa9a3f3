import logging
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from kinetic.config import settings
from kinetic.core.deps import get_rng
from kinetic.core.exceptions import UsageError
from kinetic.fpb.model import AdmissibilityPolicy, Ensemble, EnvRule, PairRule

# Configure logger
logger = logging.getLogger(__name__)


class MonteCarloService:

    @staticmethod
    def uniform_ensemble(
        n: int, lower: float, upper: float, rng: np.random.Generator, seed: Optional[int] = None
    ) -> Ensemble:
        return Ensemble(values=rng.uniform(lower, upper, n), seed=seed, t=0.0)

    @staticmethod
    def pair_interact(v: float, w: float, rule: PairRule, rng: np.random.Generator) -> tuple[float, float]:
        v_star, w_star = _interact_pairs(np.array([v], dtype=float), np.array([w], dtype=float), rule, rng)
        return float(v_star[0]), float(w_star[0])

    @staticmethod
    def env_interact(v: float, z: float, rule: EnvRule, rng: np.random.Generator) -> float:
        v_star = _interact_environment(np.array([v], dtype=float), np.array([z], dtype=float), rule, rng)
        return float(v_star[0])

    @staticmethod
    def mc_step(
        ensemble: Ensemble, rule: PairRule, lam: float, dt: float, rng: np.random.Generator
    ) -> Ensemble:
        """One step of random disjoint pairing.

        Binomial(N/2, lam*dt) pairs are taken from a uniform random pairing;
        every particle interacts at most once.
        """
        _check_rate(lam, dt)
        n = ensemble.size
        if n % 2:
            raise UsageError(f"ensemble size must be even for pairing, got {n}")

        order = rng.permutation(n)
        pairs = rng.binomial(n // 2, lam * dt)
        first = order[0 : 2 * pairs : 2]
        second = order[1 : 2 * pairs : 2]

        values = np.array(ensemble.values)
        if pairs:
            values[first], values[second] = _interact_pairs(values[first], values[second], rule, rng)
        return Ensemble(values=values, seed=ensemble.seed, t=ensemble.t + dt)

    @staticmethod
    def mc_env_step(
        ensemble: Ensemble, rule: EnvRule, lam: float, dt: float, rng: np.random.Generator
    ) -> Ensemble:
        """Binomial(N, lam*dt) particles each meet one environment draw."""
        _check_rate(lam, dt)
        n = ensemble.size
        hits = rng.binomial(n, lam * dt)
        chosen = rng.permutation(n)[:hits]
        values = np.array(ensemble.values)
        if hits:
            z = rule.environment.sample(rng, hits)
            values[chosen] = _interact_environment(values[chosen], z, rule, rng)
        return Ensemble(values=values, seed=ensemble.seed, t=ensemble.t + dt)

    @staticmethod
    def weak_observable(ensemble: Ensemble, phi: Callable[[np.ndarray], np.ndarray]) -> float:
        values = np.broadcast_to(np.asarray(phi(ensemble.values), dtype=float), ensemble.values.shape)
        return float(values.mean())

    @staticmethod
    def quasi_invariant_scale(rule: PairRule, eps: float) -> PairRule:
        """Scale interaction strength and noise variance together: P -> eps P, sigma2 -> eps sigma2."""
        if not 0 < eps <= 1:
            raise UsageError(f"eps must lie in (0, 1], got {eps}")
        return rule.model_copy(update={"P": rule.P.scaled(eps), "noise": rule.noise.scaled(eps)})

    @staticmethod
    def moment_ode_oracle(rule: PairRule, lam: float, mean0: float, var0: float):
        """Closed-form mean and variance for constant P = p, Q = q.

        The mean is invariant and dV/dt = lam * (-2 p (1 - p) V + q^2 sigma^2).
        Valid while the domain never rejects an interaction.
        """
        if not (rule.P.is_constant and rule.Q.is_constant):
            raise UsageError("moment oracle needs constant P and Q")
        p, q = rule.P.constant, rule.Q.constant
        kappa = 2 * lam * p * (1 - p)
        source = lam * q**2 * rule.noise.sigma2

        def moments(t):
            t = np.asarray(t, dtype=float)
            if kappa == 0:
                variance = var0 + source * t
            else:
                limit = source / kappa
                variance = limit + (var0 - limit) * np.exp(-kappa * t)
            mean = np.full_like(t, mean0)
            if mean.ndim == 0:
                return float(mean), float(variance)
            return mean, variance

        return moments

    @staticmethod
    def run(
        ensemble: Ensemble,
        rule: PairRule,
        lam: float,
        dt: float,
        t_end: float,
        rng: np.random.Generator,
        sample_times: Optional[list[float]] = None,
    ) -> tuple[Ensemble, list[Ensemble]]:
        """March to t_end; snapshots at the requested times (nearest step), in time order."""
        steps = max(1, int(round((t_end - ensemble.t) / dt)))
        wanted = {}
        for time in sorted(sample_times or []):
            wanted.setdefault(int(round((time - ensemble.t) / dt)), []).append(time)

        snapshots = [ensemble] * len(wanted.get(0, []))
        for step in tqdm(range(1, steps + 1), disable=not settings.SHOW_PROGRESS, desc="monte carlo"):
            ensemble = MonteCarloService.mc_step(ensemble, rule, lam, dt, rng)
            snapshots.extend([ensemble] * len(wanted.get(step, [])))
        return ensemble, snapshots

    @staticmethod
    def quasi_invariant_curves(
        rule: PairRule,
        eps_values: list[float],
        lam: float,
        taus: list[float],
        initial: Callable[[np.random.Generator], Ensemble],
        seeds: list[int],
        dt: float,
    ) -> dict[float, np.ndarray]:
        """Seed-averaged variance at rescaled times tau for every eps.

        Each scaled rule runs to t = tau / eps; the same seed gives the same
        initial ensemble for every eps.
        """
        curves = {}
        for eps in eps_values:
            scaled = MonteCarloService.quasi_invariant_scale(rule, eps)
            runs = []
            for seed in seeds:
                rng = get_rng(seed)
                start = initial(rng)
                times = [tau / eps for tau in taus]
                _, snapshots = MonteCarloService.run(start, scaled, lam, dt, max(times), rng, times)
                runs.append([float(np.var(snap.values)) for snap in snapshots])
            curves[eps] = np.mean(np.array(runs), axis=0)
            logger.info(f"eps = {eps}: variance curve {np.round(curves[eps], 6).tolist()}")
        return curves

    @staticmethod
    def histogram(ensemble: Ensemble, bins: int = 50, value_range: Optional[tuple[float, float]] = None):
        if bins < 1:
            raise UsageError(f"bins must be positive, got {bins}")
        counts, edges = np.histogram(ensemble.values, bins=bins, range=value_range)
        return counts, edges


def _check_rate(lam: float, dt: float) -> None:
    if lam < 0 or dt <= 0:
        raise UsageError(f"need lam >= 0 and dt > 0, got lam={lam}, dt={dt}")
    if lam * dt > 1:
        raise UsageError(f"lam * dt = {lam * dt:g} exceeds 1")


def _interact_pairs(v: np.ndarray, w: np.ndarray, rule: PairRule, rng: np.random.Generator):
    pv, pw = rule.P(v), rule.P(w)
    qv, qw = rule.Q(v), rule.Q(w)
    # convex form keeps P = 0 and P = 1 exact
    v_drift = (1 - pv) * v + pv * w
    w_drift = (1 - pw) * w + pw * v

    v_star = v_drift + qv * rule.noise.sample(rng, v.size)
    w_star = w_drift + qw * rule.noise.sample(rng, w.size)
    bad = ~(rule.domain.contains(v_star) & rule.domain.contains(w_star))

    if rule.policy is AdmissibilityPolicy.RESAMPLE:
        for _ in range(settings.ADMISSIBILITY_RETRIES):
            if not bad.any():
                break
            idx = np.flatnonzero(bad)
            v_star[idx] = v_drift[idx] + qv[idx] * rule.noise.sample(rng, idx.size)
            w_star[idx] = w_drift[idx] + qw[idx] * rule.noise.sample(rng, idx.size)
            bad[idx] = ~(rule.domain.contains(v_star[idx]) & rule.domain.contains(w_star[idx]))

    if bad.any():
        logger.debug(f"Skipped {int(bad.sum())} inadmissible interactions")
        v_star[bad] = v[bad]
        w_star[bad] = w[bad]
    return v_star, w_star


def _interact_environment(v: np.ndarray, z: np.ndarray, rule: EnvRule, rng: np.random.Generator) -> np.ndarray:
    q = rule.Q(v)
    drift = (1 - rule.P(v)) * v + rule.P_E(v) * z
    v_star = drift + q * rule.noise.sample(rng, v.size)
    bad = ~rule.domain.contains(v_star)

    if rule.policy is AdmissibilityPolicy.RESAMPLE:
        for _ in range(settings.ADMISSIBILITY_RETRIES):
            if not bad.any():
                break
            idx = np.flatnonzero(bad)
            v_star[idx] = drift[idx] + q[idx] * rule.noise.sample(rng, idx.size)
            bad[idx] = ~rule.domain.contains(v_star[idx])

    if bad.any():
        v_star[bad] = v[bad]
    return v_star
