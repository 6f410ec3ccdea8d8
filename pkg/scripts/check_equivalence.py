import sys
import os

# Add project root to path
sys.path.append(os.getcwd())

from compactmrf.services.oracle import equivalence_harness

def main():
    seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    print(f"Comparando LP completo vs compacto en {seeds} instancias 3x3, L=6...")

    rows = equivalence_harness(seeds)

    print("\n--- Resultados ---")
    for row in rows:
        flag = "" if row.rel_diff < 1e-4 else "  <-- ⚠️"
        print(f"seed={row.seed:3d} full={row.opt_full:10.6f} compact={row.opt_compact:10.6f} rel={row.rel_diff:.2e}{flag}")

    worst = max(rows, key=lambda r: r.rel_diff)
    print(f"\nPeor diferencia relativa: {worst.rel_diff:.2e} (seed {worst.seed})")

if __name__ == "__main__":
    main()
