"""Tradable-credit accounting and the market-clearing complementarity.

Travelers are non-atomic, so credits trade as a continuous quantity even
though the allocation k and charge tau are integers. A positive price is
consistent only with full credit consumption; slack supply forces p = 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tcsim.scenario import CorridorScenario, PolicyParams


@dataclass(frozen=True)
class CreditMarketState:
    price: float
    supply: float
    consumption: float

    @property
    def residual(self) -> float:
        return self.supply - self.consumption

    def complementarity_ok(self, tol_fraction: float = 1e-6) -> bool:
        scale = max(self.supply, 1.0)
        return (
            self.price >= 0
            and self.residual >= -tol_fraction * scale
            and self.price * self.residual <= tol_fraction * scale
        )


def market_residual(car_shares: np.ndarray, policy: PolicyParams, scenario: CorridorScenario) -> float:
    """Unused credits: total allocation minus credits consumed by car trips."""
    return market_state(car_shares, 0.0, policy, scenario).residual


def market_state(
    car_shares: np.ndarray, price: float, policy: PolicyParams, scenario: CorridorScenario
) -> CreditMarketState:
    q = scenario.group_demands()
    x = np.asarray(car_shares, dtype=float)
    supply = float(q.sum() * policy.k)
    consumption = float((q * x).sum() * policy.tau)
    return CreditMarketState(price=price, supply=supply, consumption=consumption)


def per_capita_residual(car_probs: np.ndarray, policy: PolicyParams, scenario: CorridorScenario) -> float:
    """Normalized market residual k - tau * (demand-weighted car fraction).

    Algebraically proportional to the credits residual (divide by total
    demand); this is the form stacked into the equilibrium residual vector.
    """
    q = scenario.group_demands()
    total = q.sum()
    if total <= 0:
        return float(policy.k)
    frac = float((q * np.asarray(car_probs, dtype=float)).sum() / total)
    return policy.k - policy.tau * frac
