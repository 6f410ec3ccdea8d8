import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from compactmrf.config import get_settings
from compactmrf.models.schemas import (
    CompactStyle,
    EnergyTrace,
    IsoVariant,
    Method,
    SolveReport,
    SolverConfig,
)
from compactmrf.services.graphcut import solve_graphcut
from compactmrf.services.model import LabelAssignment, MrfInstance, energy_of_labeling, round_superlevel_rows
from compactmrf.services.mplp import mplp_solve
from compactmrf.services.oracle import brute_force_map
from compactmrf.services.pdsolver import solve, write_trace_csv
from compactmrf.services.relaxations import (
    StructuredProgram,
    build_compact,
    build_compact_isotropic,
    build_convex_lp,
    build_full_lp,
    count_sizes,
)

logger = logging.getLogger(__name__)

# Métodos resueltos con el esquema primal-dual
RELAXATIONS = {Method.LP_FULL, Method.COMPACT, Method.COMPACT_ISO, Method.COMPACT_ISO_B, Method.CONVEX_LP}

class EvaluatorService:
    """Despacha una instancia al backend pedido y arma el SolveReport."""

    def __init__(self, config: Optional[SolverConfig] = None, style: CompactStyle = CompactStyle.GENERAL):
        settings = get_settings()
        self.config = config or SolverConfig(
            max_iters=settings.solver_max_iters,
            check_every=settings.solver_check_every,
            tol_gap=settings.solver_tol_gap,
            threads=settings.solver_threads,
        )
        self.style = CompactStyle(style)
        self.mplp_sweeps = settings.mplp_sweeps
        self.mplp_tol = settings.mplp_tol

    def build_program(self, inst: MrfInstance, method: Method) -> StructuredProgram:
        method = Method(method)
        if method == Method.LP_FULL:
            return build_full_lp(inst)
        if method == Method.COMPACT:
            return build_compact(inst, self.style)
        if method == Method.COMPACT_ISO:
            return build_compact_isotropic(inst, IsoVariant.JOINT_TERMS, self.style)
        if method == Method.COMPACT_ISO_B:
            return build_compact_isotropic(inst, IsoVariant.JOINT_BRANCH, CompactStyle.L1_MIN)
        if method == Method.CONVEX_LP:
            return build_convex_lp(inst)
        raise ValueError(f"{method.value} no es una relajación LP")

    def evaluate(self, inst: MrfInstance, method: Method,
                 trace_path: Optional[Union[str, Path]] = None) -> Tuple[SolveReport, Optional[EnergyTrace]]:
        """
        Resuelve `inst` con `method`.

        Returns:
            (SolveReport, EnergyTrace o None si el backend no es primal-dual)
        """
        method = Method(method)
        logger.info(f"Resolviendo con {method.value} (N={inst.node_count}, L={inst.labels})")
        trace = None
        dual = None
        iterations = None
        termination = None
        sizes = None

        if method in RELAXATIONS:
            prog = self.build_program(inst, method)
            sizes = count_sizes(prog)
            x, _, trace = solve(prog, self.config)
            labels = np.asarray(trace.best_labels) if trace.best_labels else round_superlevel_rows(prog.node_matrix(x))
            dual = trace.best_dual
            iterations = trace.iterations
            termination = trace.termination
            if trace_path is not None:
                write_trace_csv(trace, trace_path)
        elif method == Method.GRAPHCUT:
            labeling, _, flow_energy = solve_graphcut(inst)
            labels = labeling.labels
            dual = flow_energy
        elif method == Method.MPLP:
            dual, labeling, state = mplp_solve(inst, self.mplp_sweeps, self.mplp_tol)
            labels = labeling.labels
            iterations = state.sweeps
        else:
            labeling, _ = brute_force_map(inst)
            labels = labeling.labels

        energy = energy_of_labeling(inst, LabelAssignment(labels))
        report = SolveReport(
            method=method,
            energy=energy,
            dual_bound=dual,
            iterations=iterations,
            termination=termination,
            size_report=sizes,
            labels=[int(v) for v in labels],
            energy_display=f"E={energy:.4f}",
        )
        logger.info(f"{method.value}: {report.energy_display}" + (f", cota dual {dual:.4f}" if dual is not None else ""))
        return report, trace
