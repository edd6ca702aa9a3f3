import math

import numpy as np

from kinetic.core.exceptions import UsageError
from kinetic.domains.model import DomainPair, SensoryConfig, SensoryMode


class DomainService:

    @staticmethod
    def sensory_radius(rho: float, cfg: SensoryConfig) -> float:
        """Radius of the planar sector that holds critical_count neighbours.

        Solves rho * theta * R**2 = n_c. Returns inf when rho is 0.
        """
        if cfg.mode is not SensoryMode.TOPOLOGICAL:
            raise UsageError("sensory radius is only computed in topological mode")
        if rho < 0:
            raise UsageError(f"local density must be nonnegative, got {rho}")
        if rho == 0:
            return math.inf
        return math.sqrt(cfg.critical_count / (rho * cfg.theta))

    @staticmethod
    def effective_radius(pair: DomainPair) -> float:
        return min(pair.r_sensory, pair.r_visibility)

    @staticmethod
    def interaction_radius(rho: float, cfg: SensoryConfig) -> float:
        if cfg.mode is SensoryMode.METRIC:
            return cfg.r_visibility
        pair = DomainPair(
            r_sensory=DomainService.sensory_radius(rho, cfg),
            r_visibility=cfg.r_visibility,
            theta=cfg.theta,
        )
        return DomainService.effective_radius(pair)

    @staticmethod
    def in_domain(x_self, v_self, x_other, radius, theta):
        """Cone membership test, inclusive on both the radius and the angle.

        Broadcasts over leading axes of x_other (..., 2) and radius. A zero
        velocity means the full disk. The vertex itself is never inside.
        """
        x_self = np.asarray(x_self, dtype=float)
        v_self = np.asarray(v_self, dtype=float)
        offset = np.asarray(x_other, dtype=float) - x_self
        dist = np.hypot(offset[..., 0], offset[..., 1])
        # small tolerance keeps exact boundary points inside
        tol = 1e-12
        inside = (dist > 0) & (dist <= np.asarray(radius) * (1 + tol) + tol)

        speed = float(np.hypot(v_self[0], v_self[1]))
        if speed > 0 and theta < math.pi:
            dot = offset[..., 0] * v_self[0] + offset[..., 1] * v_self[1]
            cos_angle = dot / (np.where(dist > 0, dist, 1.0) * speed)
            inside &= cos_angle >= math.cos(theta) - tol

        if inside.ndim == 0:
            return bool(inside)
        return inside
