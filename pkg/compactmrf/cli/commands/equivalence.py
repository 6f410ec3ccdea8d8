import math

from compactmrf.cli import emit, handles_errors
from compactmrf.services.oracle import equivalence_harness, write_rows_csv

def register(subparsers) -> None:
    parser = subparsers.add_parser("equivalence", help="Óptimo del LP completo contra el compacto")
    parser.add_argument("--seeds", type=int, default=30)
    parser.add_argument("--width", type=int, default=3)
    parser.add_argument("--height", type=int, default=3)
    parser.add_argument("--labels", type=int, default=6)
    parser.add_argument("--max-pieces", type=int, default=3)
    parser.add_argument("--backend", choices=["highs", "pdsolver"], default="highs")
    parser.add_argument("--out", help="CSV seed,opt_full,opt_compact,rel_diff,converged")
    parser.set_defaults(func=cmd_equivalence)

@handles_errors
def cmd_equivalence(args) -> int:
    rows = equivalence_harness(args.seeds, args.width, args.height, args.labels, args.max_pieces, args.backend)
    if args.out:
        write_rows_csv(rows, args.out)
    diffs = [r.rel_diff for r in rows if not math.isnan(r.rel_diff)]
    emit(f"instances={len(rows)} max_rel_diff={max(diffs, default=0.0):.3e} "
         f"converged={sum(r.converged for r in rows)}")
    return 0
