"""Numeric AC power flow on the full network.

Newton-Raphson in polar coordinates with the full complex Jacobian.  The
slack bus holds a fixed phasor; every other bus is constant-PQ (converter
devices included — their charging/generation enters through the injection
vector).  A previously solved voltage profile can seed the iteration, which
cuts repeated solves during dispatch search to one or two iterations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .network import AdmittanceMatrix, Network, build_ybus

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50
_DIVERGENCE_MISMATCH = 1e6


class PowerFlowError(RuntimeError):
    """Base class for solver failures."""


class NonConvergence(PowerFlowError):
    """Mismatch still above tolerance after the iteration budget.

    Carries the partial solution so callers can inspect the final state.
    """

    def __init__(self, message: str, solution: "PowerFlowSolution") -> None:
        super().__init__(message)
        self.solution = solution


class SingularJacobian(PowerFlowError):
    """The correction system lost rank mid-iteration."""

    def __init__(self, iteration: int, cond_estimate: float) -> None:
        super().__init__(
            f"singular Jacobian at iteration {iteration} "
            f"(condition estimate {cond_estimate:.3e})"
        )
        self.iteration = iteration
        self.cond_estimate = cond_estimate


@dataclass(frozen=True)
class InjectionSet:
    """Net per-bus injections (generation minus load), pu, one timestep.

    The slack entry is a placeholder; the solver treats slack power as free.
    """

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.shape != q.shape or p.ndim != 1:
            raise ValueError("p and q must be 1-d arrays of equal length")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_loads(cls, p_load, q_load) -> "InjectionSet":
        """Injections for pure loads (consumption enters with minus sign)."""
        return cls(-np.asarray(p_load, dtype=float), -np.asarray(q_load, dtype=float))

    def check_finite(self, slack_index: int) -> None:
        mask = np.ones(len(self.p), dtype=bool)
        mask[slack_index] = False
        if not (np.isfinite(self.p[mask]).all() and np.isfinite(self.q[mask]).all()):
            raise ValueError("non-finite injection at a non-slack bus")


@dataclass(frozen=True)
class PowerFlowSolution:
    """Converged (or flagged) state of one power-flow solve."""

    v_mag: np.ndarray
    v_ang: np.ndarray
    branch_current: np.ndarray  # complex, oriented from_bus -> to_bus
    branch_flow_from: np.ndarray  # complex power entering at the from end
    total_losses: float
    iterations: int
    max_mismatch: float
    converged: bool
    diverged: bool = False

    @property
    def v_complex(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)

    @property
    def v_min(self) -> float:
        return float(self.v_mag.min())

    @property
    def branch_current_mag(self) -> np.ndarray:
        return np.abs(self.branch_current)


def _cond_estimate(jac: np.ndarray) -> float:
    if not np.all(np.isfinite(jac)):
        return float("inf")
    try:
        return float(np.linalg.cond(jac))
    except np.linalg.LinAlgError:
        return float("inf")


def _build_branch_arrays(net: Network) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-branch (from-index, to-index, series admittance, resistance)."""
    f_idx = np.array([net.index_of(br.from_bus) for br in net.branches], dtype=int)
    t_idx = np.array([net.index_of(br.to_bus) for br in net.branches], dtype=int)
    y_series = np.array([1.0 / br.impedance for br in net.branches], dtype=complex)
    r = np.array([br.resistance for br in net.branches], dtype=float)
    return f_idx, t_idx, y_series, r


def _branch_arrays(net: Network, ybus_obj: AdmittanceMatrix | None = None):
    """Branch index arrays, cached on a reused admittance matrix if given."""
    if ybus_obj is not None:
        cached = getattr(ybus_obj, "_pf_branch_arrays", None)
        if cached is not None:
            return cached
    arrays = _build_branch_arrays(net)
    if ybus_obj is not None:
        ybus_obj._pf_branch_arrays = arrays
    return arrays


def _branch_quantities(
    net: Network, v: np.ndarray, ybus_obj: AdmittanceMatrix | None = None
) -> tuple[np.ndarray, np.ndarray, float]:
    """Branch currents, sending-end flows, and total series I²R loss."""
    f_idx, t_idx, y_series, r = _branch_arrays(net, ybus_obj)
    currents = (v[f_idx] - v[t_idx]) * y_series
    flows = v[f_idx] * np.conj(currents)
    loss = float(np.sum(np.abs(currents) ** 2 * r))
    return currents, flows, loss


def _finish(net: Network, v: np.ndarray, iterations: int, mismatch: float,
            converged: bool, diverged: bool = False,
            ybus_obj: AdmittanceMatrix | None = None) -> PowerFlowSolution:
    currents, flows, loss = _branch_quantities(net, v, ybus_obj)
    return PowerFlowSolution(
        v_mag=np.abs(v),
        v_ang=np.angle(v),
        branch_current=currents,
        branch_flow_from=flows,
        total_losses=loss,
        iterations=iterations,
        max_mismatch=float(mismatch),
        converged=converged,
        diverged=diverged,
    )


def solve(
    net: Network,
    inj: InjectionSet,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    slack_voltage: complex = 1.0 + 0.0j,
    v0: np.ndarray | None = None,
    ybus: AdmittanceMatrix | None = None,
) -> PowerFlowSolution:
    """Newton-Raphson power flow; raises on failure, never returns silently bad.

    ``v0`` warm-starts the iteration with a complex voltage vector (its slack
    entry is overwritten).  ``ybus`` lets callers reuse a prebuilt matrix
    across many solves on the same network.
    """
    n = net.n_bus
    if len(inj.p) != n:
        raise ValueError("injection length does not match bus count")
    s = net.slack_index
    inj.check_finite(s)

    y_obj = ybus or build_ybus(net)
    y = y_obj.values
    s_spec = inj.p + 1j * inj.q

    if v0 is not None:
        v = np.asarray(v0, dtype=complex).copy()
        if v.shape != (n,):
            raise ValueError("v0 must have one entry per bus")
    else:
        v = np.full(n, 1.0 + 0.0j)
    v[s] = slack_voltage

    pq = np.array([i for i in range(n) if i != s], dtype=int)
    npq = len(pq)
    diag = np.arange(n)
    pq_grid = np.ix_(pq, pq)
    vm = np.abs(v)
    va = np.angle(v)

    def mismatch_vec(vv: np.ndarray) -> np.ndarray:
        ds = vv * np.conj(y @ vv) - s_spec
        return np.concatenate([ds.real[pq], ds.imag[pq]])

    f = mismatch_vec(v)
    mis = float(np.max(np.abs(f))) if npq else 0.0

    for it in range(max_iter):
        if mis <= tol:
            return _finish(net, v, it, mis, converged=True, ybus_obj=y_obj)
        if not math.isfinite(mis) or mis > _DIVERGENCE_MISMATCH:
            sol = _finish(net, v, it, mis, converged=False, diverged=True,
                          ybus_obj=y_obj)
            raise NonConvergence(
                f"diverged at iteration {it} (mismatch {mis:.3e})", sol
            )

        # Complex Jacobian, written with row/column scaling instead of
        # diagonal-matrix products: dS/dθ = j·diag(V)·conj(diag(I) − Y·diag(V))
        # and dS/d|V| = diag(V)·conj(Y·diag(V/|V|)) + conj(diag(I))·diag(V/|V|).
        ibus = y @ v
        m = -(y * v[None, :])
        m[diag, diag] += ibus
        ds_dva = (1j * v)[:, None] * np.conj(m)
        # a degenerate |V| = 0 state turns vnorm into NaN, which the
        # singular-Jacobian check below converts into a clear error
        with np.errstate(invalid="ignore", divide="ignore"):
            vnorm = v / vm
        ds_dvm = v[:, None] * np.conj(y * vnorm[None, :])
        ds_dvm[diag, diag] += np.conj(ibus) * vnorm

        jac = np.empty((2 * npq, 2 * npq))
        jac[:npq, :npq] = ds_dva.real[pq_grid]
        jac[:npq, npq:] = ds_dvm.real[pq_grid]
        jac[npq:, :npq] = ds_dva.imag[pq_grid]
        jac[npq:, npq:] = ds_dvm.imag[pq_grid]

        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            raise SingularJacobian(it, _cond_estimate(jac)) from None
        if not np.all(np.isfinite(dx)):
            raise SingularJacobian(it, _cond_estimate(jac))

        va[pq] += dx[:npq]
        vm[pq] += dx[npq:]
        v = vm * np.exp(1j * va)
        f = mismatch_vec(v)
        mis = float(np.max(np.abs(f))) if npq else 0.0

    if mis <= tol:
        return _finish(net, v, max_iter, mis, converged=True, ybus_obj=y_obj)
    sol = _finish(net, v, max_iter, mis, converged=False,
                  diverged=not math.isfinite(mis) or mis > _DIVERGENCE_MISMATCH,
                  ybus_obj=y_obj)
    raise NonConvergence(
        f"no convergence after {max_iter} iterations (mismatch {mis:.3e})", sol
    )


def compute_losses(net: Network, sol: PowerFlowSolution) -> float:
    """Total series I²R loss of a converged solution, pu."""
    if not sol.converged:
        raise PowerFlowError(
            f"refusing to report losses of a non-converged solution "
            f"(mismatch {sol.max_mismatch:.3e})"
        )
    loss = 0.0
    for k, br in enumerate(net.branches):
        loss += (abs(sol.branch_current[k]) ** 2) * br.resistance
    return loss


def compute_reactive_losses(net: Network, sol: PowerFlowSolution) -> float:
    """Total series I²X absorption of a converged solution, pu."""
    if not sol.converged:
        raise PowerFlowError("refusing to report losses of a non-converged solution")
    return float(
        sum((abs(sol.branch_current[k]) ** 2) * br.reactance
            for k, br in enumerate(net.branches))
    )


@dataclass(frozen=True)
class VoltageViolation:
    bus: int
    v: float
    bound: float


@dataclass(frozen=True)
class ThermalViolation:
    from_bus: int
    to_bus: int
    i: float
    i_cap: float


@dataclass(frozen=True)
class LimitReport:
    """Exhaustive listing of voltage-band and ampacity violations."""

    voltage_violations: tuple[VoltageViolation, ...]
    thermal_violations: tuple[ThermalViolation, ...]
    voltage_margin: float
    thermal_margin: float

    @property
    def ok(self) -> bool:
        return not self.voltage_violations and not self.thermal_violations


def check_limits(net: Network, sol: PowerFlowSolution) -> LimitReport:
    """Compare a converged solution against bus voltage bands and ampacities."""
    if not sol.converged:
        raise PowerFlowError("refusing to check limits of a non-converged solution")
    v_viol = []
    v_margin = math.inf
    for pos, bus in enumerate(net.buses):
        v = float(sol.v_mag[pos])
        v_margin = min(v_margin, v - bus.v_min, bus.v_max - v)
        if v < bus.v_min:
            v_viol.append(VoltageViolation(bus.id, v, bus.v_min))
        elif v > bus.v_max:
            v_viol.append(VoltageViolation(bus.id, v, bus.v_max))

    t_viol = []
    t_margin = math.inf
    for k, br in enumerate(net.branches):
        i = float(abs(sol.branch_current[k]))
        if math.isfinite(br.current_cap):
            t_margin = min(t_margin, br.current_cap - i)
        if i > br.current_cap:
            t_viol.append(ThermalViolation(br.from_bus, br.to_bus, i, br.current_cap))
    return LimitReport(tuple(v_viol), tuple(t_viol), v_margin, t_margin)


def bus_table(net: Network, sol: PowerFlowSolution) -> str:
    """CSV text of per-bus results: ``bus,v_pu,angle_deg``."""
    lines = ["bus,v_pu,angle_deg"]
    for pos, bus in enumerate(net.buses):
        lines.append(
            f"{bus.id},{sol.v_mag[pos]:.9f},{math.degrees(sol.v_ang[pos]):.6f}"
        )
    return "\n".join(lines) + "\n"


def branch_table(net: Network, sol: PowerFlowSolution) -> str:
    """CSV text of per-branch results.

    Columns: ``branch,from,to,i_pu,p_from_pu,q_from_pu,loss_pu``.
    """
    lines = ["branch,from,to,i_pu,p_from_pu,q_from_pu,loss_pu"]
    for k, br in enumerate(net.branches):
        i = abs(sol.branch_current[k])
        flow = sol.branch_flow_from[k]
        loss = (i**2) * br.resistance
        lines.append(
            f"{k + 1},{br.from_bus},{br.to_bus},"
            f"{i:.9f},{flow.real:.9f},{flow.imag:.9f},{loss:.9f}"
        )
    return "\n".join(lines) + "\n"
