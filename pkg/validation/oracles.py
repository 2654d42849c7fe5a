"""
Reference solutions for the continuous systems the engines discretize.

Neither oracle shares stepping code with the engines: heat flow is solved
exactly through the Laplacian spectrum, Kuramoto dynamics with fine-step RK4.
The synthetic generator reuses the RK4 integrator for its daily rhythm.
"""

from typing import Union

import numpy as np

MIN_RK4_STEPS = 10_000


def heat_oracle(
    laplacian: np.ndarray, u0: np.ndarray, kappa: float, capacity: float, t_final: float
) -> np.ndarray:
    """
    u(t) = Ψ diag(exp(−(κ/C)·λ_i·t)) Ψᵀ u0 for symmetric L = Ψ Λ Ψᵀ.

    Args:
        laplacian: Symmetric N×N combinatorial Laplacian
        u0: Initial state, N or N×D
        kappa: Diffusivity
        capacity: Capacity
        t_final: Physical time
    """
    eigvals, eigvecs = np.linalg.eigh(np.asarray(laplacian, dtype=np.float64))
    decay = np.exp(-(kappa / capacity) * eigvals * t_final)
    u0 = np.asarray(u0, dtype=np.float64)
    modes = eigvecs.T @ u0
    decayed = decay[:, None] * modes if modes.ndim == 2 else decay * modes
    return eigvecs @ decayed


def kuramoto_rk4(
    adjacency: np.ndarray,
    phases: np.ndarray,
    omega: np.ndarray,
    coupling: Union[float, np.ndarray],
    dt: float,
    steps: int,
) -> np.ndarray:
    """Unwrapped phase trajectory, (steps + 1)×N, starting with ``phases``.

    ``coupling`` may be a scalar or one value per node.
    """

    def rhs(phi: np.ndarray) -> np.ndarray:
        return omega + coupling * (adjacency * np.sin(phi[None, :] - phi[:, None])).sum(axis=1)

    trajectory = np.empty((steps + 1, phases.size))
    trajectory[0] = phases
    phi = phases.copy()
    for step in range(steps):
        k1 = rhs(phi)
        k2 = rhs(phi + 0.5 * dt * k1)
        k3 = rhs(phi + 0.5 * dt * k2)
        k4 = rhs(phi + dt * k3)
        phi = phi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        trajectory[step + 1] = phi
    return trajectory


def kuramoto_oracle(adjacency: np.ndarray, phi0: np.ndarray, nu: np.ndarray, gamma, t_final: float,
                    rk4_steps: int = MIN_RK4_STEPS) -> np.ndarray:
    """
    Unwrapped phases at ``t_final`` of dφ_k/dt = ν_k + γ_k·Σ_j A_kj sin(φ_j − φ_k).

    ``gamma`` is a scalar or a per-node vector.
    """
    if rk4_steps < MIN_RK4_STEPS:
        raise ValueError(
            f"reference integration needs at least {MIN_RK4_STEPS} RK4 steps, got {rk4_steps}"
        )
    return kuramoto_rk4(
        np.asarray(adjacency, dtype=np.float64),
        np.asarray(phi0, dtype=np.float64),
        np.asarray(nu, dtype=np.float64),
        np.asarray(gamma, dtype=np.float64),
        t_final / rk4_steps,
        rk4_steps,
    )[-1]
