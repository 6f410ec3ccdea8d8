import json
from pathlib import Path

from compactmrf.cli import emit, handles_errors
from compactmrf.config import get_settings
from compactmrf.models.schemas import CompactStyle, Method, SolverConfig
from compactmrf.services.evaluator import EvaluatorService
from compactmrf.services.model import read_instance

def register(subparsers) -> None:
    settings = get_settings()
    parser = subparsers.add_parser("solve", help="Resuelve una instancia con el backend elegido")
    parser.add_argument("--in", dest="input", required=True, help="Instancia JSON")
    parser.add_argument("--method", choices=[m.value for m in Method], default=Method.COMPACT.value)
    parser.add_argument("--style", choices=[s.value for s in CompactStyle], default=CompactStyle.GENERAL.value)
    parser.add_argument("--iters", type=int, default=settings.solver_max_iters)
    parser.add_argument("--check-every", type=int, default=settings.solver_check_every)
    parser.add_argument("--tol", type=float, default=settings.solver_tol_gap)
    parser.add_argument("--threads", type=int, default=settings.solver_threads)
    parser.add_argument("--trace", help="CSV del trace de energías (métodos primal-dual)")
    parser.add_argument("--out", help="Reporte JSON con el etiquetado")
    parser.set_defaults(func=cmd_solve)

@handles_errors
def cmd_solve(args) -> int:
    inst = read_instance(args.input)
    config = SolverConfig(
        max_iters=args.iters,
        check_every=min(args.check_every, args.iters),
        tol_gap=args.tol,
        threads=args.threads,
    )
    service = EvaluatorService(config, style=CompactStyle(args.style))
    report, _ = service.evaluate(inst, Method(args.method), trace_path=args.trace)

    emit(f"method={report.method.value} energy={report.energy:.6f}")
    if report.dual_bound is not None:
        emit(f"dual_bound={report.dual_bound:.6f}")
    if report.size_report is not None:
        sizes = report.size_report
        per_edge = max(sizes.per_edge_primal, default=0)
        emit(f"sizes: primal={sizes.total_primal} rows={sizes.total_rows} per_edge_primal<={per_edge}")
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(report.model_dump(mode="json"), f)
    return 0
