from compactmrf.cli import emit, handles_errors
from compactmrf.config import get_settings
from compactmrf.services.model import gen_random_instance, write_instance

def register(subparsers) -> None:
    settings = get_settings()
    parser = subparsers.add_parser("gen", help="Genera una instancia aleatoria en grilla (min{|h|, 2})")
    parser.add_argument("--width", type=int, default=settings.gen_width)
    parser.add_argument("--height", type=int, default=settings.gen_height)
    parser.add_argument("--labels", type=int, default=settings.gen_labels)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="Archivo JSON de salida")
    parser.set_defaults(func=cmd_gen)

@handles_errors
def cmd_gen(args) -> int:
    inst = gen_random_instance(args.width, args.height, args.labels, args.seed)
    write_instance(inst, args.out)
    emit(f"{args.out}: N={inst.node_count} E={inst.topology.edge_count} L={inst.labels}")
    return 0
