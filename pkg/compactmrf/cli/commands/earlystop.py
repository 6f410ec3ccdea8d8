import csv
from pathlib import Path

from compactmrf.cli import emit, handles_errors
from compactmrf.config import get_settings
from compactmrf.services.experiments import earlystop_study, gap_fraction, gap_histogram

def register(subparsers) -> None:
    settings = get_settings()
    parser = subparsers.add_parser("earlystop", help="Brecha entre la cota de MPLP y el óptimo LP")
    parser.add_argument("--instances", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--width", type=int, default=settings.gen_width)
    parser.add_argument("--height", type=int, default=settings.gen_height)
    parser.add_argument("--labels", type=int, default=settings.gen_labels)
    parser.add_argument("--sweeps", type=int, default=settings.mplp_sweeps)
    parser.add_argument("--out", required=True, help="CSV del histograma (gap_bucket,count)")
    parser.add_argument("--gaps", help="CSV por instancia (seed,gap)")
    parser.set_defaults(func=cmd_earlystop)

@handles_errors
def cmd_earlystop(args) -> int:
    rows = earlystop_study(args.instances, args.seed, args.width, args.height, args.labels, args.sweeps)
    gaps = [r.gap for r in rows]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["gap_bucket", "count"])
        writer.writerows(gap_histogram(gaps))
    if args.gaps:
        with open(args.gaps, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["seed", "gap"])
            writer.writerows((r.seed, repr(r.gap)) for r in rows)
    emit(f"fraction(gap > 0.001) = {gap_fraction(gaps, 1e-3):.3f}")
    emit(f"fraction(gap > 0.01) = {gap_fraction(gaps, 1e-2):.3f}")
    return 0
