from compactmrf.cli import emit, handles_errors
from compactmrf.config import get_settings
from compactmrf.models.schemas import CompactStyle, Method, SolverConfig
from compactmrf.services.evaluator import EvaluatorService
from compactmrf.services.experiments import denoising_instance
from compactmrf.services.image_processor import ImageProcessor
from compactmrf.services.model import energy_of_labeling

def register(subparsers) -> None:
    settings = get_settings()
    parser = subparsers.add_parser("denoise", help="Denoising de un PGM con el prior min_k α|h| + β")
    parser.add_argument("--in", dest="input", required=True, help="PGM de 8 bits (P2 o P5)")
    parser.add_argument("--labels", type=int, default=settings.denoise_labels)
    parser.add_argument("--lambda", dest="lam", type=float, default=settings.denoise_lambda)
    parser.add_argument("--iters", type=int, default=settings.solver_max_iters)
    parser.add_argument("--check-every", type=int, default=settings.solver_check_every)
    parser.add_argument("--threads", type=int, default=settings.solver_threads)
    parser.add_argument("--iso", action="store_true", help="Acoplamiento isotrópico (joint_terms)")
    parser.add_argument("--full", action="store_true", help="LP completo en vez del compacto")
    parser.add_argument("--trace", help="CSV del trace de energías")
    parser.add_argument("--truth", help="PGM limpio para reportar PSNR")
    parser.add_argument("--out", required=True, help="PGM de salida (P5)")
    parser.set_defaults(func=cmd_denoise)

    corrupt = subparsers.add_parser("corrupt", help="Aplica ruido: outliers uniformes + N(0, σ)")
    corrupt.add_argument("--in", dest="input", required=True)
    corrupt.add_argument("--seed", type=int, default=0)
    corrupt.add_argument("--rate", type=float, default=settings.denoise_outlier_rate)
    corrupt.add_argument("--sigma", type=float, default=settings.denoise_sigma)
    corrupt.add_argument("--out", required=True)
    corrupt.set_defaults(func=cmd_corrupt)

@handles_errors
def cmd_denoise(args) -> int:
    if args.iso and args.full:
        raise ValueError("--iso y --full son excluyentes")
    image = ImageProcessor.load_pgm(args.input)
    inst = denoising_instance(image, args.labels, args.lam)
    method = Method.LP_FULL if args.full else Method.COMPACT_ISO if args.iso else Method.COMPACT
    config = SolverConfig(max_iters=args.iters, check_every=min(args.check_every, args.iters), threads=args.threads)
    service = EvaluatorService(config, style=CompactStyle.L1_MIN)
    noisy_energy = energy_of_labeling(inst, ImageProcessor.to_labels(image, args.labels))
    report, _ = service.evaluate(inst, method, trace_path=args.trace)

    result = ImageProcessor.from_labels(report.labels, image.shape, args.labels)
    ImageProcessor.save_pgm(result, args.out)
    emit(f"noisy_energy={noisy_energy:.4f} energy={report.energy:.4f} dual_bound={report.dual_bound:.4f}")
    if report.size_report is not None:
        emit(f"sizes: primal={report.size_report.total_primal} rows={report.size_report.total_rows}")
    if args.truth:
        truth = ImageProcessor.load_pgm(args.truth)
        emit(f"psnr={ImageProcessor.psnr(result, truth):.2f}dB")
    return 0

@handles_errors
def cmd_corrupt(args) -> int:
    image = ImageProcessor.load_pgm(args.input)
    noisy = ImageProcessor.corrupt(image, args.seed, args.rate, args.sigma)
    ImageProcessor.save_pgm(noisy, args.out)
    emit(f"{args.out}: psnr={ImageProcessor.psnr(noisy, image):.2f}dB")
    return 0
