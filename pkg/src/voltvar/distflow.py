"""Nonlinear DistFlow power flow for radial feeders.

The backward/forward sweep here is the physics reference for everything the
conic relaxation produces: line flows ``P, Q`` are sending-end quantities,
``ell`` is squared current magnitude and ``nu`` squared voltage magnitude,
all in per-unit.  Loads are constant power inside the sweep.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .feeder import FeederModel


class SweepError(RuntimeError):
    """The sweep failed to converge or hit voltage collapse."""


@dataclass(frozen=True)
class Injections:
    """Per-bus injections, indexed by bus position in the model."""

    p_c: np.ndarray
    q_c: np.ndarray
    p_g: np.ndarray
    q_g: np.ndarray
    q_sc: np.ndarray

    def __post_init__(self):
        for name in ("p_c", "q_c", "p_g", "q_g", "q_sc"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite {name}")
            object.__setattr__(self, name, arr)
        if np.any(self.q_sc < 0):
            raise ValueError("capacitor ratings must be nonnegative")

    @classmethod
    def zeros(cls, model: FeederModel) -> "Injections":
        z = np.zeros(model.n_bus)
        return cls(z, z, z, z, z)

    @property
    def p_net(self) -> np.ndarray:
        return self.p_c - self.p_g

    def with_q_g(self, q_g) -> "Injections":
        return Injections(self.p_c, self.q_c, self.p_g, np.asarray(q_g, dtype=float), self.q_sc)


@dataclass(frozen=True)
class PowerFlowState:
    P: np.ndarray  # per line, sending end
    Q: np.ndarray
    ell: np.ndarray  # per line, |I|^2
    nu: np.ndarray  # per bus, |V|^2
    root_injection: complex = 0j
    iterations: int = 0

    @property
    def voltage(self) -> np.ndarray:
        return np.sqrt(self.nu)


@dataclass(frozen=True)
class CostBreakdown:
    line_loss: float
    cvr_cost: float
    inverter_loss: float

    @property
    def total(self) -> float:
        return self.line_loss + self.cvr_cost + self.inverter_loss


def cvr_weights(model: FeederModel, p_c) -> np.ndarray:
    """CVR weights ``alpha_i = (n_i / 2) * p_i^c``."""
    n = np.array([b.load_exponent for b in model.buses])
    return 0.5 * n * np.asarray(p_c, dtype=float)


def _child_sum(model: FeederModel, flows: np.ndarray) -> np.ndarray:
    """For each line, the sum of ``flows`` over the lines leaving its receiving bus."""
    per_bus = np.zeros((model.n_bus,) + flows.shape[1:])
    np.add.at(per_bus, model.line_from, flows)
    return per_bus[1:]


def _col(v, like):
    return v[:, None] if like.ndim == 2 else v


def _flows(model, p_net, q_net, q_sc, ell, nu):
    D = model.downstream
    r, x = _col(model.r, ell), _col(model.x, ell)
    P = D @ p_net + D[:, 1:] @ (r * ell)
    Q = D @ (q_net - q_sc * nu) + D[:, 1:] @ (x * ell)
    return P, Q


def _residual_arrays(model, p_net, q_net, q_sc, P, Q, ell, nu):
    r, x = _col(model.r, ell), _col(model.x, ell)
    frm = model.line_from
    res_p = P - (_child_sum(model, P) + r * ell + p_net[1:])
    res_q = Q - (_child_sum(model, Q) + x * ell + q_net[1:] - q_sc[1:] * nu[1:])
    res_v = nu[1:] - (nu[frm] - 2 * (r * P + x * Q) + (r**2 + x**2) * ell)
    res_l = ell - (P**2 + Q**2) / nu[frm]
    return res_p, res_q, res_v, res_l


def sweep_arrays(model: FeederModel, p_net, q_net, q_sc, v_root=1.0, tol=1e-10, max_iter=100):
    """Vectorised sweep core.

    Injection arrays are ``(n_bus,)`` or ``(n_bus, k)`` for ``k`` independent
    cases solved together.  Returns ``(P, Q, ell, nu, converged, iterations)``
    with ``converged`` per case.  Cases that collapse (``nu <= 0``) or blow up
    are frozen and reported unconverged instead of raising.
    """
    p_net = np.asarray(p_net, dtype=float)
    q_net = np.asarray(q_net, dtype=float)
    if p_net.ndim != q_net.ndim:
        p_net, q_net = (a if a.ndim == 2 else a[:, None] for a in (p_net, q_net))
    shape = np.broadcast_shapes(p_net.shape, q_net.shape)
    p_net = np.broadcast_to(p_net, shape)
    q_net = np.broadcast_to(q_net, shape)
    q_sc = np.asarray(q_sc, dtype=float)
    if len(shape) == 2 and q_sc.ndim == 1:
        q_sc = q_sc[:, None]
    nu0 = v_root**2
    ell = np.zeros((model.n_line,) + shape[1:])
    nu = np.full(shape, nu0)
    r, x = _col(model.r, ell), _col(model.x, ell)
    z2 = r**2 + x**2
    frm = model.line_from
    DT = model.downstream.T[1:]

    alive = np.ones(shape[1:], dtype=bool)
    converged = np.zeros(shape[1:], dtype=bool)
    P = Q = ell
    it = 0
    with np.errstate(all="ignore"):
        for it in range(1, max_iter + 1):
            P_new, Q_new = _flows(model, p_net, q_net, q_sc, ell, nu)
            ell_new = (P_new**2 + Q_new**2) / nu[frm]
            nu_new = np.empty_like(nu)
            nu_new[0] = nu0
            nu_new[1:] = nu0 - DT @ (2 * (r * P_new + x * Q_new) - z2 * ell_new)
            alive &= np.all(nu_new > 0, axis=0) & np.all(np.isfinite(ell_new), axis=0)
            P, Q = np.where(alive, P_new, P), np.where(alive, Q_new, Q)
            ell, nu = np.where(alive, ell_new, ell), np.where(alive, nu_new, nu)
            res = _residual_arrays(model, p_net, q_net, q_sc, P, Q, ell, nu)
            worst = np.max([np.max(np.abs(a), axis=0, initial=0.0) for a in res], axis=0)
            converged = alive & (worst <= tol)
            if np.all(converged | ~alive):
                break
    return P, Q, ell, nu, converged, it


def sweep_solve(model: FeederModel, inj: Injections, v_root: float = 1.0,
                tol: float = 1e-10, max_iter: int = 100) -> PowerFlowState:
    """Solve the DistFlow equations by fixed-point backward/forward sweep.

    Starts from flat voltage and zero current.  Raises :class:`SweepError` if
    the iteration does not reach ``tol`` within ``max_iter`` sweeps or a
    squared voltage becomes nonpositive.
    """
    if v_root <= 0 or tol <= 0:
        raise ValueError("v_root and tol must be positive")
    P, Q, ell, nu, ok, it = sweep_arrays(
        model, inj.p_net, inj.q_c - inj.q_g, inj.q_sc, v_root, tol, max_iter)
    if not ok:
        if it < max_iter:
            raise SweepError("voltage collapse: nonpositive squared voltage")
        raise SweepError(f"sweep did not converge in {max_iter} iterations")
    return PowerFlowState(P, Q, ell, nu, _root_injection(model, inj, P, Q, nu), it)


def _root_injection(model, inj, P, Q, nu):
    root_lines = model.line_from == 0
    p = P[root_lines].sum(axis=0) + inj.p_net[0]
    q = Q[root_lines].sum(axis=0) + inj.q_c[0] - inj.q_g[0] - inj.q_sc[0] * nu[0]
    return complex(p, q)


def residuals(model: FeederModel, inj: Injections, state: PowerFlowState):
    """Max absolute residuals of the real balance, reactive balance, voltage drop
    and current definition, in that order."""
    res = _residual_arrays(model, inj.p_net, inj.q_c - inj.q_g, inj.q_sc,
                           state.P, state.Q, state.ell, state.nu)
    return tuple(float(np.max(np.abs(a), initial=0.0)) for a in res)


def inverter_loss(p, q, coeffs) -> float:
    c_s, c_v, c_r = coeffs
    s2 = p * p + q * q
    return c_s + c_v * np.sqrt(s2) + c_r * s2


def objective_terms(model: FeederModel, state: PowerFlowState,
                    inverter_outputs: Mapping[int, tuple[float, float]],
                    weights, loss_coeffs: Mapping[int, tuple[float, float, float]] | None = None
                    ) -> CostBreakdown:
    """Line loss, CVR term and inverter losses of a power flow state.

    ``inverter_outputs`` maps bus id to ``(p_g, q_g)``.  ``loss_coeffs`` maps
    bus id to per-unit ``(c_s, c_v, c_r)``; when omitted they come from the
    model's inverter specs.
    """
    line = float(np.dot(model.r, state.ell))
    cvr = float(np.dot(np.asarray(weights, dtype=float), state.nu))
    inv = 0.0
    for bus, (p, q) in inverter_outputs.items():
        coeffs = loss_coeffs[bus] if loss_coeffs is not None else model.bus(bus).inverter.absolute_coeffs()
        inv += float(inverter_loss(p, q, coeffs))
    return CostBreakdown(line, cvr, inv)
