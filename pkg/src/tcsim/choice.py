"""Generalized costs per group and mode, and logit choice probabilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tcsim.scenario import BUS, CAR, DRAS, MODES, ModeParams, PolicyParams

INFEASIBLE = np.inf


@dataclass
class GeneralizedCostTensor:
    """Cost components in EUR, shape (n_groups, 3) with columns (car, bus, dras).

    Unavailable modes carry +inf in ``total`` and are excluded from the choice
    set. Car has no waiting component; car pays (tau - k) * p in credits while
    service riders redeem their allocation.
    """

    in_vehicle: np.ndarray
    waiting: np.ndarray
    credit: np.ndarray
    constant: np.ndarray
    total: np.ndarray


def assemble_costs(
    travel_times_s: np.ndarray,
    perceived_waits_s: np.ndarray,
    price: float,
    policy: PolicyParams,
    params: ModeParams,
    available: np.ndarray,
) -> GeneralizedCostTensor:
    """Combine in-vehicle time, perceived waiting, credit trade, and constants.

    ``travel_times_s`` and ``perceived_waits_s`` are (n_groups, 3) with the
    perceived waits already summed over the boarding stations of each group's
    path; values of time are converted from EUR/h at load time.
    """
    tt = np.asarray(travel_times_s, dtype=float)
    pw = np.asarray(perceived_waits_s, dtype=float)
    if tt.shape != pw.shape or tt.shape[1] != 3:
        raise ValueError("expected (n_groups, 3) tensors")
    if not np.isfinite(price) or price < 0:
        raise ValueError("price must be finite and >= 0")

    n = tt.shape[0]
    in_vehicle = params.alpha_eur_per_s * tt
    waiting = params.alpha_wait_eur_per_s * pw
    waiting[:, MODES.index(CAR)] = 0.0
    credit = np.zeros((n, 3))
    credit[:, MODES.index(CAR)] = (policy.tau - policy.k) * price
    credit[:, MODES.index(BUS)] = -params.redemption_weight_bus * policy.k * price
    credit[:, MODES.index(DRAS)] = -params.redemption_weight_dras * policy.k * price
    constant = np.tile([params.delta_car_eur, params.delta_bus_eur, params.delta_dras_eur], (n, 1))

    total = in_vehicle + waiting + credit + constant
    total = np.where(np.asarray(available, dtype=bool), total, INFEASIBLE)
    return GeneralizedCostTensor(in_vehicle, waiting, credit, constant, total)


def logit_probabilities(costs: np.ndarray, theta: float) -> np.ndarray:
    """Multinomial logit over rows of a cost matrix, with max-shift stabilization.

    +inf marks an unavailable mode and is excluded from the denominator; NaN
    or -inf costs are a hard error. Rows sum to 1 within 1e-12.
    """
    if theta <= 0:
        raise ValueError("theta must be > 0")
    c = np.asarray(costs, dtype=float)
    if np.any(np.isnan(c)) or np.any(np.isneginf(c)):
        raise ValueError("costs must not contain NaN or -inf")
    available = np.isfinite(c)
    if np.any(~available.any(axis=1)):
        raise ValueError("every group needs at least one available mode")
    u = np.where(available, -theta * c, -np.inf)
    shift = u.max(axis=1, keepdims=True)
    w = np.exp(u - shift)
    return w / w.sum(axis=1, keepdims=True)
