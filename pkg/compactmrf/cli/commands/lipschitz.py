import numpy as np

from compactmrf.cli import emit, handles_errors
from compactmrf.config import get_settings
from compactmrf.models.schemas import Method, SolverConfig
from compactmrf.services.evaluator import EvaluatorService
from compactmrf.services.experiments import lipschitz_bound, lipschitz_instance, smooth_signal
from compactmrf.services.image_processor import ImageProcessor

def register(subparsers) -> None:
    settings = get_settings()
    parser = subparsers.add_parser("lipschitz", help="Señal 1-D con prior Lipschitz: compacto vs corte exacto")
    parser.add_argument("--nodes", type=int, default=64)
    parser.add_argument("--labels", type=int, default=32)
    parser.add_argument("--eta", type=float, default=1 / 16)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--in", dest="input", help="PGM: se usa la fila --row como señal")
    parser.add_argument("--truth", help="PGM de referencia: el PSNR se mide contra su fila --row")
    parser.add_argument("--row", type=int, default=0)
    parser.add_argument("--iters", type=int, default=settings.solver_max_iters)
    parser.add_argument("--trace", help="CSV del trace de energías")
    parser.set_defaults(func=cmd_lipschitz)

def _pgm_row(path: str, row: int) -> np.ndarray:
    image = ImageProcessor.load_pgm(path)
    if not 0 <= row < image.shape[0]:
        raise ValueError(f"fila {row} fuera de {path} ({image.shape[0]} filas)")
    return image[row].astype(float)

@handles_errors
def cmd_lipschitz(args) -> int:
    if args.input:
        signal = _pgm_row(args.input, args.row) * (args.labels - 1) / ImageProcessor.MAXVAL
    else:
        signal = smooth_signal(args.nodes, args.labels, args.seed)

    service = EvaluatorService(SolverConfig(max_iters=args.iters, check_every=min(50, args.iters)))
    compact, _ = service.evaluate(lipschitz_instance(signal, args.labels, args.eta), Method.COMPACT,
                                  trace_path=args.trace)
    exact, _ = service.evaluate(lipschitz_instance(signal, args.labels, args.eta, convex=True), Method.GRAPHCUT)

    levels = ImageProcessor.label_intensities(args.labels)
    restored = levels[np.asarray(compact.labels)]
    emit(f"bound={lipschitz_bound(args.labels, args.eta)} compact={compact.energy:.6f} exact={exact.energy:.6f}")
    if args.truth:
        truth = _pgm_row(args.truth, args.row)
        if truth.size != restored.size:
            raise ValueError(f"la referencia tiene {truth.size} píxeles, la señal {restored.size}")
        emit(f"psnr(compact vs truth)={ImageProcessor.psnr(restored, truth):.2f}dB")
    else:
        emit(f"psnr(compact vs exact)={ImageProcessor.psnr(restored, levels[np.asarray(exact.labels)]):.2f}dB")
    return 0
