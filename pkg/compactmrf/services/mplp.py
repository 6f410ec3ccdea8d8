"""
MPLP (min-sum) con envolventes inferiores O(KL) vía min-filter.

Para la arista e = (s, t) con δ̄_s = θ_s + Σ_{e' ≠ e} δ_{e'→s}:
    δ_{e→s}^i <- -½ δ̄_s^i + ½ min_j (w ϑ^{j-i} + δ̄_t^j)
    δ_{e→t}^j <- -½ δ̄_t^j + ½ min_i (w ϑ^{j-i} + δ̄_s^i)
Las dos actualizaciones usan los mismos δ̄. Las aristas se recorren en orden de
construcción.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from compactmrf.models.schemas import INFINITE_ENERGY, PiecewiseLinearPotential
from compactmrf.services import potentials as pot
from compactmrf.services.model import LabelAssignment, MrfInstance

logger = logging.getLogger(__name__)

def min_filter(values, lo: int, hi: int) -> np.ndarray:
    """
    out[i] = min{values[j] : i+lo <= j <= i+hi, 0 <= j < n}; +inf si la ventana
    queda fuera del arreglo. Deque monótona, O(n) total.
    """
    if lo > hi:
        raise ValueError(f"ventana inválida [{lo}, {hi}]")
    vals = values.tolist() if isinstance(values, np.ndarray) else list(values)
    n = len(vals)
    out = [INFINITE_ENERGY] * n
    window = deque()  # índices con valores crecientes
    nxt = max(0, lo)
    for i in range(n):
        right = min(i + hi, n - 1)
        while nxt <= right:
            v = vals[nxt]
            while window and vals[window[-1]] >= v:
                window.pop()
            window.append(nxt)
            nxt += 1
        left = i + lo
        while window and window[0] < left:
            window.popleft()
        if window:
            out[i] = vals[window[0]]
    return np.asarray(out, dtype=float)

def lower_envelope(theta_t, p: PiecewiseLinearPotential, w: float = 1.0) -> np.ndarray:
    """
    out[i] = min_j {theta_t[j] + w ϑ^{j-i}}

    Por pieza k: min_filter(theta_t[j] + wα_k j, [h_lo^k, h_hi^k])[i] - wα_k i + wβ_k.
    """
    theta_t = np.asarray(theta_t, dtype=float)
    L = theta_t.shape[0]
    idx = np.arange(L)
    out = np.full(L, INFINITE_ENERGY)
    for piece in p.pieces:
        slope = w * piece.alpha
        filtered = min_filter(theta_t + slope * idx, piece.h_lo, piece.h_hi)
        out = np.minimum(out, filtered - slope * idx + w * piece.beta)
    return out

@dataclass
class MessageState:
    to_s: np.ndarray  # (E, L): δ_{e→s}
    to_t: np.ndarray  # (E, L): δ_{e→t}
    belief: np.ndarray  # (N, L): θ_s + Σ δ_{e→s}
    dual_history: List[float] = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False

    @property
    def dual_value(self) -> float:
        return self.dual_history[-1] if self.dual_history else -INFINITE_ENERGY

class MplpSolver:
    """Barridos MPLP sobre una instancia con potenciales por piezas."""

    def __init__(self, inst: MrfInstance):
        self.inst = inst
        L = inst.labels
        pw = [pot.to_piecewise(p, L) for p in inst.potentials]
        self.forward = pw
        self.backward = [pot.mirror(p) for p in pw]
        E = inst.topology.edge_count
        self.state = MessageState(
            to_s=np.zeros((E, L)),
            to_t=np.zeros((E, L)),
            belief=inst.unary.copy(),
        )

    def _update_edge(self, e: int) -> None:
        inst, st = self.inst, self.state
        s, t = inst.edges[e]
        k = int(inst.edge_potential[e])
        w = float(inst.edge_weight[e])
        bar_s = st.belief[s] - st.to_s[e]
        bar_t = st.belief[t] - st.to_t[e]
        new_s = -0.5 * bar_s + 0.5 * lower_envelope(bar_t, self.forward[k], w)
        new_t = -0.5 * bar_t + 0.5 * lower_envelope(bar_s, self.backward[k], w)
        st.to_s[e], st.to_t[e] = new_s, new_t
        st.belief[s] = bar_s + new_s
        st.belief[t] = bar_t + new_t

    def dual_value(self) -> float:
        """Σ_s min_i b_s^i + Σ_e min_{i,j} (w ϑ^{j-i} - δ_{e→s}^i - δ_{e→t}^j)."""
        inst, st = self.inst, self.state
        value = float(st.belief.min(axis=1).sum())
        for e in range(inst.topology.edge_count):
            k = int(inst.edge_potential[e])
            env = lower_envelope(-st.to_t[e], self.forward[k], float(inst.edge_weight[e]))
            value += float(np.min(env - st.to_s[e]))
        return value

    def decode(self) -> LabelAssignment:
        return LabelAssignment(np.argmin(self.state.belief, axis=1))

    def run(self, sweeps: int, tol: float = 1e-9) -> MessageState:
        st = self.state
        if not st.dual_history:
            st.dual_history.append(self.dual_value())
        for _ in range(sweeps):
            for e in range(self.inst.topology.edge_count):
                self._update_edge(e)
            st.sweeps += 1
            st.dual_history.append(self.dual_value())
            if st.dual_history[-1] - st.dual_history[-2] < tol:
                st.converged = True
                break
        if not st.converged:
            logger.warning(f"MPLP alcanzó el tope de {sweeps} barridos sin converger")
        logger.info(f"MPLP: {st.sweeps} barridos, dual={st.dual_value:.9f}")
        return st

def mplp_solve(inst: MrfInstance, sweeps: int = 1000, tol: float = 1e-9) -> Tuple[float, LabelAssignment, MessageState]:
    solver = MplpSolver(inst)
    state = solver.run(sweeps, tol)
    return state.dual_value, solver.decode(), state
