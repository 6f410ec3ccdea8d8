from compactmrf.cli.commands import bench, denoise, earlystop, equivalence, gen, lipschitz, solve

COMMANDS = [gen, solve, earlystop, denoise, bench, lipschitz, equivalence]
