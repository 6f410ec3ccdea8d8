from compactmrf.cli import emit, handles_errors
from compactmrf.services.experiments import bench_envelope
from compactmrf.services.oracle import write_rows_csv

def register(subparsers) -> None:
    parser = subparsers.add_parser("bench", help="Envolvente O(KL) contra el doble loop O(L²)")
    parser.add_argument("--labels", type=int, nargs="+", default=[32, 64, 128])
    parser.add_argument("--pieces", type=int, default=3)
    parser.add_argument("--reps", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="CSV de tiempos")
    parser.set_defaults(func=cmd_bench_envelope)

@handles_errors
def cmd_bench_envelope(args) -> int:
    if args.pieces < 1:
        raise ValueError(f"--pieces debe ser >= 1, no {args.pieces}")
    rows = [bench_envelope(L, args.pieces, args.reps, args.seed) for L in args.labels]
    for row in rows:
        emit(f"L={row.labels} K={row.pieces} fast={row.fast_seconds:.3e}s naive={row.naive_seconds:.3e}s equal={row.equal}")
    if args.out:
        write_rows_csv(rows, args.out)
    if not all(row.equal for row in rows):
        raise RuntimeError("lower_envelope difiere de la referencia")
    return 0
