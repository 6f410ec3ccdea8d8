import sys
import os

# Add project root to path
sys.path.append(os.getcwd())

from compactmrf.services.experiments import bench_envelope

def main():
    pieces = 3
    previous = None
    print(f"Escalamiento de la envolvente inferior (K={pieces})")
    for labels in (32, 64, 128, 256):
        row = bench_envelope(labels, pieces, reps=10)
        line = f"L={labels:4d} rápido={row.fast_seconds:.2e}s ingenuo={row.naive_seconds:.2e}s igual={row.equal}"
        if previous is not None:
            line += (f"  ratio rápido={row.fast_seconds / previous.fast_seconds:.2f}"
                     f" ingenuo={row.naive_seconds / previous.naive_seconds:.2f}")
        print(line)
        previous = row

if __name__ == "__main__":
    main()
