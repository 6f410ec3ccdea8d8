"""
Relajaciones LP como programas punto-silla estructurados.

    min_{x ∈ C}  c·x + const + Σ_r g_r((Kx - b)_r)

C es un producto de bloques simples (simplex, no negativo, caja). Cada fila r de K
tiene una clase prox: `free` (igualdad), `interval [lo, hi]` con
g(v) = max(lo·v, hi·v) (bisagras, |·|, restricciones unilaterales con hi = inf) o
`l2ball` (grupos con peso r·‖v‖).

Las filas se arman con átomos simples (variable, coef) y átomos de suma prefija
(bloque, i, coef) que valen coef·Y^i con Y^i = Σ_{j<i} y^j; i <= 0 se anula e
i >= L toma la masa total del bloque.

Convenciones (verificadas contra fuerza bruta):
- X_s^i = [i > Λ(s)] para etiquetados enteros.
- α·h, h = Λ(t) - Λ(s), se escribe α Σ_{i=1}^{L-1} (X_s^i - X_t^i).
- γ[h + δ]_+ se escribe Σ_i γ[X_s^i - X_t^{i-δ}]_+, i ∈ [1, L-1+max(δ,0)].
- h <= h_hi: Y_s^i <= Y_t^{i+h_hi};  h >= h_lo: Y_t^j <= Y_s^{j-h_lo}.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from compactmrf.models.schemas import (
    INFINITE_ENERGY,
    BlockKind,
    CompactStyle,
    ConvexHingePotential,
    IsoVariant,
    PiecewiseLinearPotential,
    ProxClass,
    SizeReport,
)
from compactmrf.services import potentials as pot
from compactmrf.services.model import LabelAssignment, MrfInstance, energy_of_labeling

logger = logging.getLogger(__name__)

# clases prox de fila
FREE, INTERVAL, L2BALL = 0, 1, 2
PROX_NAMES = {FREE: ProxClass.FREE, INTERVAL: ProxClass.INTERVAL, L2BALL: ProxClass.L2BALL}

# dueño de variables / filas (para el reporte de tamaños)
OWNER_NODE, OWNER_EDGE, OWNER_OTHER = 0, 1, 2

@dataclass(frozen=True)
class PrimalBlock:
    kind: BlockKind
    offset: int
    size: int
    lo: float = 0.0
    hi: float = math.inf
    owner: int = OWNER_OTHER
    owner_index: int = -1

@dataclass(frozen=True)
class PrefixGroup:
    """Bloques prefijos de igual largo y los átomos que los referencian."""
    length: int
    offsets: np.ndarray  # (B,)
    rows: np.ndarray
    pos: np.ndarray  # posición del bloque dentro del grupo
    cum: np.ndarray  # índice acumulado en [1, length]
    coef: np.ndarray

@dataclass
class StructuredProgram:
    name: str
    labels: int
    n_primal: int
    blocks: List[PrimalBlock]
    cost: np.ndarray
    constant: float
    n_rows: int
    rhs: np.ndarray
    row_class: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    row_group: np.ndarray  # id de grupo l2 o -1
    group_radius: np.ndarray
    atom_rows: np.ndarray
    atom_vars: np.ndarray
    atom_coef: np.ndarray
    prefix_offsets: np.ndarray
    prefix_lengths: np.ndarray
    patom_rows: np.ndarray
    patom_block: np.ndarray
    patom_cum: np.ndarray
    patom_coef: np.ndarray
    prefix_groups: List[PrefixGroup]
    var_owner: np.ndarray
    var_owner_index: np.ndarray
    row_owner: np.ndarray
    row_owner_index: np.ndarray
    node_offset: np.ndarray
    edge_count: int
    instance: Optional[MrfInstance] = None
    lifter: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    # derivados para proyecciones
    var_lo: np.ndarray = field(default=None, repr=False)
    var_hi: np.ndarray = field(default=None, repr=False)
    simplex_index: Dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def node_matrix(self, x: np.ndarray) -> np.ndarray:
        """Bloques x_s como matriz (N, L)."""
        return x[self.node_offset[:, None] + np.arange(self.labels)]

class ProgramBuilder:
    """Acumula bloques, filas y átomos; `build` congela todo en arrays."""

    def __init__(self, name: str, inst: MrfInstance):
        self.name = name
        self.inst = inst
        self.blocks: List[PrimalBlock] = []
        self.n_primal = 0
        self.constant = 0.0
        self.n_rows = 0
        self.n_groups = 0
        self._cost_idx, self._cost_val = [], []
        self._row_class, self._row_lo, self._row_hi = [], [], []
        self._row_owner, self._row_owner_index, self._row_group = [], [], []
        self._group_radius = []
        self._atoms = ([], [], [])
        self._patoms = ([], [], [], [])
        self.prefix_offsets, self.prefix_lengths = [], []

    def add_block(self, kind: BlockKind, size: int, owner: int, owner_index: int,
                  lo: float = 0.0, hi: float = math.inf) -> int:
        offset = self.n_primal
        if kind == BlockKind.BOX and not (lo <= hi):
            raise ValueError(f"caja inválida [{lo}, {hi}]")
        self.blocks.append(PrimalBlock(kind, offset, size, lo, hi, owner, owner_index))
        self.n_primal += size
        return offset

    def add_prefix(self, offset: int, length: int) -> int:
        self.prefix_offsets.append(offset)
        self.prefix_lengths.append(length)
        return len(self.prefix_offsets) - 1

    def add_rows(self, count: int, prox: int, owner: int, owner_index: int,
                 lo: float = 0.0, hi: float = 0.0, group=None) -> np.ndarray:
        rows = np.arange(self.n_rows, self.n_rows + count, dtype=np.int64)
        self.n_rows += count
        self._row_class.append(np.full(count, prox, dtype=np.int8))
        self._row_lo.append(np.full(count, lo, dtype=float))
        self._row_hi.append(np.full(count, hi, dtype=float))
        self._row_owner.append(np.full(count, owner, dtype=np.int8))
        self._row_owner_index.append(np.broadcast_to(np.asarray(owner_index, dtype=np.int64), (count,)).copy())
        grp = np.full(count, -1, dtype=np.int64) if group is None else np.broadcast_to(
            np.asarray(group, dtype=np.int64), (count,)).copy()
        self._row_group.append(grp)
        return rows

    def add_groups(self, radii) -> np.ndarray:
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        if np.any(radii < 0):
            raise ValueError("radio l2 negativo")
        ids = np.arange(self.n_groups, self.n_groups + radii.size, dtype=np.int64)
        self.n_groups += radii.size
        self._group_radius.append(radii)
        return ids

    def add_atoms(self, rows, variables, coefs) -> None:
        rows, variables, coefs = np.broadcast_arrays(
            np.asarray(rows, dtype=np.int64), np.asarray(variables, dtype=np.int64), np.asarray(coefs, dtype=float))
        self._atoms[0].append(rows.ravel())
        self._atoms[1].append(variables.ravel())
        self._atoms[2].append(coefs.ravel())

    def add_prefix_atoms(self, rows, blocks, cums, coefs) -> None:
        rows, blocks, cums, coefs = np.broadcast_arrays(
            np.asarray(rows, dtype=np.int64), np.asarray(blocks, dtype=np.int64),
            np.asarray(cums, dtype=np.int64), np.asarray(coefs, dtype=float))
        rows, blocks, cums, coefs = rows.ravel(), blocks.ravel(), cums.ravel(), coefs.ravel()
        # Y^i = 0 para i <= 0; Y^i = masa total para i >= L
        keep = cums > 0
        rows, blocks, cums, coefs = rows[keep], blocks[keep], cums[keep], coefs[keep]
        lengths = np.asarray(self.prefix_lengths, dtype=np.int64)[blocks] if blocks.size else blocks
        cums = np.minimum(cums, lengths)
        for store, arr in zip(self._patoms, (rows, blocks, cums, coefs)):
            store.append(arr)

    def add_cost(self, variables, coefs) -> None:
        variables, coefs = np.broadcast_arrays(np.asarray(variables, dtype=np.int64), np.asarray(coefs, dtype=float))
        self._cost_idx.append(variables.ravel())
        self._cost_val.append(coefs.ravel())

    @staticmethod
    def _cat(parts, dtype):
        return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype=dtype)

    def build(self, node_offset: np.ndarray, lifter: Callable) -> StructuredProgram:
        n = self.n_primal
        cost = np.bincount(self._cat(self._cost_idx, np.int64), weights=self._cat(self._cost_val, float), minlength=n)
        prefix_offsets = np.asarray(self.prefix_offsets, dtype=np.int64)
        prefix_lengths = np.asarray(self.prefix_lengths, dtype=np.int64)
        prows = self._cat(self._patoms[0], np.int64)
        pblock = self._cat(self._patoms[1], np.int64)
        pcum = self._cat(self._patoms[2], np.int64)
        pcoef = self._cat(self._patoms[3], float)

        groups = []
        for length in np.unique(prefix_lengths):
            members = np.flatnonzero(prefix_lengths == length)
            pos_map = np.full(prefix_lengths.size, -1, dtype=np.int64)
            pos_map[members] = np.arange(members.size)
            sel = prefix_lengths[pblock] == length if pblock.size else np.zeros(0, dtype=bool)
            groups.append(PrefixGroup(
                length=int(length), offsets=prefix_offsets[members], rows=prows[sel],
                pos=pos_map[pblock[sel]], cum=pcum[sel], coef=pcoef[sel],
            ))

        var_owner = np.full(n, OWNER_OTHER, dtype=np.int8)
        var_owner_index = np.full(n, -1, dtype=np.int64)
        var_lo = np.zeros(n)
        var_hi = np.full(n, math.inf)
        simplex: Dict[int, List[int]] = {}
        for blk in self.blocks:
            sl = slice(blk.offset, blk.offset + blk.size)
            var_owner[sl] = blk.owner
            var_owner_index[sl] = blk.owner_index
            if blk.kind == BlockKind.BOX:
                var_lo[sl], var_hi[sl] = blk.lo, blk.hi
            elif blk.kind == BlockKind.SIMPLEX:
                simplex.setdefault(blk.size, []).append(blk.offset)
        simplex_index = {
            dim: np.asarray(offs, dtype=np.int64)[:, None] + np.arange(dim) for dim, offs in simplex.items()
        }

        prog = StructuredProgram(
            name=self.name,
            labels=self.inst.labels,
            n_primal=n,
            blocks=list(self.blocks),
            cost=cost,
            constant=float(self.constant),
            n_rows=self.n_rows,
            rhs=np.zeros(self.n_rows),
            row_class=self._cat(self._row_class, np.int8),
            row_lo=self._cat(self._row_lo, float),
            row_hi=self._cat(self._row_hi, float),
            row_group=self._cat(self._row_group, np.int64),
            group_radius=self._cat(self._group_radius, float),
            atom_rows=self._cat(self._atoms[0], np.int64),
            atom_vars=self._cat(self._atoms[1], np.int64),
            atom_coef=self._cat(self._atoms[2], float),
            prefix_offsets=prefix_offsets,
            prefix_lengths=prefix_lengths,
            patom_rows=prows,
            patom_block=pblock,
            patom_cum=pcum,
            patom_coef=pcoef,
            prefix_groups=groups,
            var_owner=var_owner,
            var_owner_index=var_owner_index,
            row_owner=self._cat(self._row_owner, np.int8),
            row_owner_index=self._cat(self._row_owner_index, np.int64),
            node_offset=np.asarray(node_offset, dtype=np.int64),
            edge_count=self.inst.topology.edge_count,
            instance=self.inst,
            lifter=lifter,
            var_lo=var_lo,
            var_hi=var_hi,
            simplex_index=simplex_index,
        )
        logger.info(
            f"Programa {self.name}: {prog.n_primal} primales, {prog.n_rows} filas, "
            f"{prog.atom_rows.size} átomos, {prog.patom_rows.size} átomos prefijos"
        )
        return prog

# --- piezas comunes ---

def _add_nodes(b: ProgramBuilder, with_prefix: bool):
    inst = b.inst
    L = inst.labels
    offsets = np.empty(inst.node_count, dtype=np.int64)
    pids = np.full(inst.node_count, -1, dtype=np.int64)
    for s in range(inst.node_count):
        offsets[s] = b.add_block(BlockKind.SIMPLEX, L, OWNER_NODE, s)
        if with_prefix:
            pids[s] = b.add_prefix(offsets[s], L)
    b.add_cost(offsets[:, None] + np.arange(L), inst.unary)
    return offsets, pids

def _affine_cost(b: ProgramBuilder, off_s: int, off_t: int, coef: float) -> None:
    """coef · Σ_{i=1}^{L-1} (Y_s^i - Y_t^i) expandido sobre las variables."""
    if coef == 0:
        return
    L = b.inst.labels
    j = np.arange(L)
    b.add_cost(off_s + j, coef * (L - 1 - j))
    b.add_cost(off_t + j, -coef * (L - 1 - j))

def _domain_rows(b: ProgramBuilder, owner_index: int, pid_s: int, pid_t: int,
                 h_lo: Optional[int], h_hi: Optional[int]) -> int:
    """Filas unilaterales para h ∈ [h_lo, h_hi]; devuelve cuántas agregó."""
    L = b.inst.labels
    added = 0
    if h_hi is not None:
        i = np.arange(1, L + 1)
        i = i[i + h_hi < L]
        if i.size:
            rows = b.add_rows(i.size, INTERVAL, OWNER_EDGE, owner_index, lo=0.0, hi=math.inf)
            b.add_prefix_atoms(rows, pid_s, i, 1.0)
            b.add_prefix_atoms(rows, pid_t, i + h_hi, -1.0)
            added += i.size
    if h_lo is not None:
        j = np.arange(1, L + 1)
        j = j[j - h_lo < L]
        if j.size:
            rows = b.add_rows(j.size, INTERVAL, OWNER_EDGE, owner_index, lo=0.0, hi=math.inf)
            b.add_prefix_atoms(rows, pid_t, j, 1.0)
            b.add_prefix_atoms(rows, pid_s, j - h_lo, -1.0)
            added += j.size
    return added

def _check_feasible(inst: MrfInstance, labels: np.ndarray) -> None:
    if not math.isfinite(energy_of_labeling(inst, LabelAssignment(labels))):
        raise ValueError("etiquetado infactible: viola una restricción dura del potencial")

def _one_hot_nodes(n_primal: int, node_offset: np.ndarray, labels: np.ndarray) -> np.ndarray:
    x = np.zeros(n_primal)
    x[node_offset + labels] = 1.0
    return x

# --- LP estándar ---

def build_full_lp(inst: MrfInstance) -> StructuredProgram:
    """LP local con x_st ∈ [0,1]^{L×L}; entradas +inf de ϑ no se materializan."""
    b = ProgramBuilder("lp-full", inst)
    L = inst.labels
    node_off, _ = _add_nodes(b, with_prefix=False)
    I, J = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    I, J = I.ravel(), J.ravel()
    pair_maps = []
    for e, (s, t) in enumerate(inst.edges):
        values = inst.table(int(inst.edge_potential[e]))[J - I + L - 1]
        keep = np.isfinite(values)
        i, j = I[keep], J[keep]
        off = b.add_block(BlockKind.BOX, int(keep.sum()), OWNER_EDGE, e, 0.0, 1.0)
        variables = off + np.arange(i.size)
        b.add_cost(variables, inst.edge_weight[e] * values[keep])
        rs = b.add_rows(L, FREE, OWNER_EDGE, e)
        rt = b.add_rows(L, FREE, OWNER_EDGE, e)
        # x_s^i - Σ_j x_st^{ij} = 0 ; x_t^j - Σ_i x_st^{ij} = 0
        b.add_atoms(rs, node_off[s] + np.arange(L), 1.0)
        b.add_atoms(rs[i], variables, -1.0)
        b.add_atoms(rt, node_off[t] + np.arange(L), 1.0)
        b.add_atoms(rt[j], variables, -1.0)
        pair = np.full(L * L, -1, dtype=np.int64)
        pair[i * L + j] = variables
        pair_maps.append(pair)

    def lifter(labels: np.ndarray) -> np.ndarray:
        _check_feasible(inst, labels)
        x = _one_hot_nodes(b.n_primal, node_off, labels)
        for e, (s, t) in enumerate(inst.edges):
            x[pair_maps[e][labels[s] * L + labels[t]]] = 1.0
        return x

    return b.build(node_off, lifter)

# --- LP convexo (superlevel) ---

def build_convex_lp(inst: MrfInstance) -> StructuredProgram:
    """Sólo x_s ∈ Δ^L; bisagras como filas intervalo sobre sumas prefijas."""
    if not inst.all_convex():
        raise ValueError("build_convex_lp requiere potenciales ConvexHingePotential en todas las aristas")
    b = ProgramBuilder("convex-lp", inst)
    L = inst.labels
    node_off, node_pid = _add_nodes(b, with_prefix=True)
    for e, (s, t) in enumerate(inst.edges):
        p: ConvexHingePotential = inst.edge_pot(e)
        w = float(inst.edge_weight[e])
        _affine_cost(b, node_off[s], node_off[t], w * p.alpha)
        b.constant += w * p.beta
        for term in p.hinges:
            if w * term.gamma == 0:
                continue
            i = np.arange(1, L + max(term.delta, 0))
            i = i[~((i >= L) & (i - term.delta >= L))]
            if not i.size:
                continue
            rows = b.add_rows(i.size, INTERVAL, OWNER_EDGE, e, lo=0.0, hi=w * term.gamma)
            b.add_prefix_atoms(rows, node_pid[s], i, 1.0)
            b.add_prefix_atoms(rows, node_pid[t], i - term.delta, -1.0)
        _domain_rows(b, e, node_pid[s], node_pid[t], p.h_lo, p.h_hi)

    def lifter(labels: np.ndarray) -> np.ndarray:
        _check_feasible(inst, labels)
        return _one_hot_nodes(b.n_primal, node_off, labels)

    return b.build(node_off, lifter)

# --- formulación compacta ---

def _branches(p, style: CompactStyle, labels: int):
    """Ramas (alpha, beta, h_lo, h_hi) o términos L1 (a, beta) según el estilo."""
    if style == CompactStyle.GENERAL:
        return [(pc.alpha, pc.beta, pc.h_lo, pc.h_hi) for pc in p.pieces]
    return pot.as_l1_terms(p, labels)

def _branch_values(branches, style: CompactStyle, h: int) -> np.ndarray:
    if style == CompactStyle.GENERAL:
        return np.array([a * h + c if lo <= h <= hi else INFINITE_ENERGY for a, c, lo, hi in branches])
    return np.array([a * abs(h) + c for a, c in branches])

def _edge_branch_blocks(b: ProgramBuilder, e: int, s: int, t: int, node_off, K: int):
    """Bloques y_{st→s}^k, y_{st→t}^k, filas de marginalización y de masa."""
    L = b.inst.labels
    ys = np.array([b.add_block(BlockKind.BOX, L, OWNER_EDGE, e, 0.0, 1.0) for _ in range(K)], dtype=np.int64)
    yt = np.array([b.add_block(BlockKind.BOX, L, OWNER_EDGE, e, 0.0, 1.0) for _ in range(K)], dtype=np.int64)
    ps = np.array([b.add_prefix(o, L) for o in ys], dtype=np.int64)
    pt = np.array([b.add_prefix(o, L) for o in yt], dtype=np.int64)
    lab = np.arange(L)
    # x_s^i - Σ_k y_s^{ki} = 0
    rs = b.add_rows(L, FREE, OWNER_EDGE, e)
    b.add_atoms(rs, node_off[s] + lab, 1.0)
    b.add_atoms(rs[None, :], ys[:, None] + lab, -1.0)
    rt = b.add_rows(L, FREE, OWNER_EDGE, e)
    b.add_atoms(rt, node_off[t] + lab, 1.0)
    b.add_atoms(rt[None, :], yt[:, None] + lab, -1.0)
    # Σ_i y_s^{ki} - Σ_i y_t^{ki} = 0
    rm = b.add_rows(K, FREE, OWNER_EDGE, e)
    b.add_prefix_atoms(rm, ps, L, 1.0)
    b.add_prefix_atoms(rm, pt, L, -1.0)
    return ys, yt, ps, pt

def build_compact(inst: MrfInstance, style: CompactStyle = CompactStyle.GENERAL) -> StructuredProgram:
    """
    Reformulación compacta: 2KL incógnitas por arista.

    general: cada pieza (α, β, [h_lo, h_hi]) es una rama con su parte afín en el
    objetivo, β/2 en cada lado y filas de dominio unilaterales.
    l1_min: cada término α|h| + β aporta filas |Y_s^{ki} - Y_t^{ki}| con dual en [-wα, wα].
    """
    style = CompactStyle(style)
    if not inst.all_piecewise():
        raise ValueError("build_compact requiere potenciales PiecewiseLinearPotential")
    b = ProgramBuilder(f"compact-{style.value}", inst)
    L = inst.labels
    node_off, _ = _add_nodes(b, with_prefix=False)
    layout = []
    for e, (s, t) in enumerate(inst.edges):
        w = float(inst.edge_weight[e])
        branches = _branches(inst.edge_pot(e), style, L)
        K = len(branches)
        ys, yt, ps, pt = _edge_branch_blocks(b, e, s, t, node_off, K)
        for k, br in enumerate(branches):
            b.add_cost(ys[k] + np.arange(L), w * br[1] / 2)
            b.add_cost(yt[k] + np.arange(L), w * br[1] / 2)
            if style == CompactStyle.GENERAL:
                alpha, _, h_lo, h_hi = br
                _affine_cost(b, ys[k], yt[k], w * alpha)
                _domain_rows(b, e, ps[k], pt[k], h_lo, h_hi)
            elif br[0] > 0 and w > 0:
                i = np.arange(1, L)
                if i.size:
                    rows = b.add_rows(i.size, INTERVAL, OWNER_EDGE, e, lo=-w * br[0], hi=w * br[0])
                    b.add_prefix_atoms(rows, ps[k], i, 1.0)
                    b.add_prefix_atoms(rows, pt[k], i, -1.0)
        layout.append((branches, ys, yt))

    def lifter(labels: np.ndarray) -> np.ndarray:
        _check_feasible(inst, labels)
        x = _one_hot_nodes(b.n_primal, node_off, labels)
        for e, (s, t) in enumerate(inst.edges):
            branches, ys, yt = layout[e]
            k = int(np.argmin(_branch_values(branches, style, int(labels[t] - labels[s]))))
            x[ys[k] + labels[s]] = 1.0
            x[yt[k] + labels[t]] = 1.0
        return x

    return b.build(node_off, lifter)

# --- variantes isotrópicas ---

def _check_homogeneous(inst: MrfInstance, right: np.ndarray, down: np.ndarray) -> None:
    first = inst.potentials[int(inst.edge_potential[0])] if inst.topology.edge_count else None
    for e in range(inst.topology.edge_count):
        if inst.edge_pot(e) != first:
            raise ValueError("las variantes isotrópicas requieren un potencial homogéneo")
    for s in range(inst.node_count):
        eh, ev = right[s], down[s]
        if eh >= 0 and ev >= 0 and inst.edge_weight[eh] != inst.edge_weight[ev]:
            raise ValueError(f"pesos distintos en el píxel {s}: horizontal y vertical deben coincidir")
    if first is not None:
        table = pot.table(first, inst.labels)
        if not np.array_equal(table, table[::-1]):
            raise ValueError("las variantes isotrópicas requieren un potencial simétrico")

def _coupled_rows(b: ProgramBuilder, radius: float, members) -> None:
    """
    Filas acopladas en un grupo l2 de radio `radius`. `members` es una lista de
    (arista, [(bloque prefijo, i, coef), ...]); con un solo miembro el grupo se
    degenera a un intervalo [-radius, radius].
    """
    if len(members) == 1:
        e, atoms = members[0]
        row = b.add_rows(1, INTERVAL, OWNER_EDGE, e, lo=-radius, hi=radius)
        for pid, i, coef in atoms:
            b.add_prefix_atoms(row, pid, i, coef)
        return
    gid = b.add_groups(radius)[0]
    for e, atoms in members:
        row = b.add_rows(1, L2BALL, OWNER_EDGE, e, group=gid)
        for pid, i, coef in atoms:
            b.add_prefix_atoms(row, pid, i, coef)

def build_compact_isotropic(inst: MrfInstance, variant: IsoVariant = IsoVariant.JOINT_TERMS,
                            style: CompactStyle = CompactStyle.L1_MIN) -> StructuredProgram:
    """
    Acoplamiento l2 entre la arista horizontal y la vertical de cada píxel.

    joint_terms: programa compacto por arista cuyas masas β·z (ambos estilos, β >= 0)
    y filas |Y_s - Y_t| (estilo l1_min) se agrupan de a pares en bolas l2.
    joint_branch: un selector z_s ∈ Δ^K por píxel compartido por ambas direcciones
    (sólo estilo l1_min).
    """
    variant, style = IsoVariant(variant), CompactStyle(style)
    topo = inst.topology
    if not topo.is_grid:
        raise ValueError("las variantes isotrópicas requieren metadatos de grilla")
    if not inst.all_piecewise():
        raise ValueError("las variantes isotrópicas requieren potenciales PiecewiseLinearPotential")
    right, down = topo.grid_neighbors()
    _check_homogeneous(inst, right, down)
    if variant == IsoVariant.JOINT_BRANCH:
        if style != CompactStyle.L1_MIN:
            raise ValueError("joint_branch sólo admite el estilo l1_min")
        return _build_joint_branch(inst, right, down)
    return _build_joint_terms(inst, style, right, down)

def _build_joint_terms(inst: MrfInstance, style: CompactStyle, right, down) -> StructuredProgram:
    L = inst.labels
    b = ProgramBuilder(f"compact-iso-{style.value}", inst)
    node_off, _ = _add_nodes(b, with_prefix=False)
    layout = []
    for e, (s, t) in enumerate(inst.edges):
        w = float(inst.edge_weight[e])
        branches = _branches(inst.edge_pot(e), style, L)
        if style == CompactStyle.GENERAL and any(br[0] != 0 for br in branches):
            raise ValueError("joint_terms en estilo general requiere alpha = 0 en todas las piezas")
        if any(br[1] < 0 for br in branches):
            raise ValueError("joint_terms requiere beta >= 0")
        ys, yt, ps, pt = _edge_branch_blocks(b, e, s, t, node_off, len(branches))
        if style == CompactStyle.GENERAL:
            for k, (_, _, h_lo, h_hi) in enumerate(branches):
                _domain_rows(b, e, ps[k], pt[k], h_lo, h_hi)
        layout.append((branches, ys, yt, ps, pt))

    for s in range(inst.node_count):
        edges = [e for e in (right[s], down[s]) if e >= 0]
        if not edges:
            continue
        w = float(inst.edge_weight[edges[0]])
        branches = layout[edges[0]][0]
        for k, br in enumerate(branches):
            beta = br[1]
            # β^k ‖(z_h^k, z_v^k)‖ con z = ½(Σ y_s + Σ y_t), en ambos estilos
            if w * beta != 0:
                _coupled_rows(b, w * beta, [
                    (e, [(layout[e][3][k], L, 0.5), (layout[e][4][k], L, 0.5)]) for e in edges
                ])
            if style == CompactStyle.L1_MIN and w * br[0] != 0:
                for i in range(1, L):
                    _coupled_rows(b, w * br[0], [
                        (e, [(layout[e][3][k], i, 1.0), (layout[e][4][k], i, -1.0)]) for e in edges
                    ])

    def lifter(labels: np.ndarray) -> np.ndarray:
        _check_feasible(inst, labels)
        x = _one_hot_nodes(b.n_primal, node_off, labels)
        for e, (s, t) in enumerate(inst.edges):
            branches, ys, yt = layout[e][:3]
            k = int(np.argmin(_branch_values(branches, style, int(labels[t] - labels[s]))))
            x[ys[k] + labels[s]] = 1.0
            x[yt[k] + labels[t]] = 1.0
        return x

    return b.build(node_off, lifter)

def joint_branch_value(terms, weight: float, a_s: int, neighbors: Sequence[int], labels: int) -> np.ndarray:
    """Valor por rama de un píxel entero: w(β_k + α_k Σ_i ‖(D_r^i, D_d^i)‖)."""
    i = np.arange(1, labels)
    own = (i > a_s).astype(float)
    diffs = [((i > a).astype(float) - own) for a in neighbors]
    norms = np.sqrt(sum(d ** 2 for d in diffs)).sum() if diffs else 0.0
    return np.array([weight * (beta + alpha * norms) for alpha, beta in terms])

def _build_joint_branch(inst: MrfInstance, right, down) -> StructuredProgram:
    L = inst.labels
    b = ProgramBuilder("compact-iso-joint_branch", inst)
    node_off, _ = _add_nodes(b, with_prefix=False)
    lab = np.arange(L)
    layout = {}
    for s in range(inst.node_count):
        edges = [int(e) for e in (right[s], down[s]) if e >= 0]
        if not edges:
            continue
        w = float(inst.edge_weight[edges[0]])
        terms = pot.as_l1_terms(inst.edge_pot(edges[0]), L)
        K = len(terms)
        z = b.add_block(BlockKind.SIMPLEX, K, OWNER_OTHER, s)
        b.add_cost(z + np.arange(K), w * np.array([beta for _, beta in terms]))
        own = np.array([b.add_block(BlockKind.BOX, L, OWNER_OTHER, s, 0.0, 1.0) for _ in range(K)], dtype=np.int64)
        own_pid = np.array([b.add_prefix(o, L) for o in own], dtype=np.int64)
        # x_s^i = Σ_k y_{s→s}^{ki}
        rows = b.add_rows(L, FREE, OWNER_OTHER, s)
        b.add_atoms(rows, node_off[s] + lab, 1.0)
        b.add_atoms(rows[None, :], own[:, None] + lab, -1.0)
        # z_s^k = Σ_i y_{s→s}^{ki}
        rows = b.add_rows(K, FREE, OWNER_OTHER, s)
        b.add_atoms(rows, z + np.arange(K), 1.0)
        b.add_prefix_atoms(rows, own_pid, L, -1.0)
        nbr = []
        for e in edges:
            t = int(inst.edges[e, 1])
            ys = np.array([b.add_block(BlockKind.BOX, L, OWNER_EDGE, e, 0.0, 1.0) for _ in range(K)], dtype=np.int64)
            pid = np.array([b.add_prefix(o, L) for o in ys], dtype=np.int64)
            rows = b.add_rows(L, FREE, OWNER_EDGE, e)
            b.add_atoms(rows, node_off[t] + lab, 1.0)
            b.add_atoms(rows[None, :], ys[:, None] + lab, -1.0)
            # Σ_i y_{s→t}^{ki} = Σ_i y_{s→s}^{ki}
            rows = b.add_rows(K, FREE, OWNER_EDGE, e)
            b.add_prefix_atoms(rows, pid, L, 1.0)
            b.add_prefix_atoms(rows, own_pid, L, -1.0)
            nbr.append((e, t, ys, pid))
        for k, (alpha, _) in enumerate(terms):
            if w * alpha == 0:
                continue
            for i in range(1, L):
                _coupled_rows(b, w * alpha, [
                    (e, [(pid[k], i, 1.0), (own_pid[k], i, -1.0)]) for e, _, _, pid in nbr
                ])
        layout[s] = (terms, w, z, own, nbr)

    def lifter(labels: np.ndarray) -> np.ndarray:
        _check_feasible(inst, labels)
        x = _one_hot_nodes(b.n_primal, node_off, labels)
        for s, (terms, w, z, own, nbr) in layout.items():
            values = joint_branch_value(terms, w, int(labels[s]), [int(labels[t]) for _, t, _, _ in nbr], L)
            k = int(np.argmin(values))
            x[z + k] = 1.0
            x[own[k] + labels[s]] = 1.0
            for _, t, ys, _ in nbr:
                x[ys[k] + labels[t]] = 1.0
        return x

    return b.build(node_off, lifter)

# --- utilidades ---

def count_sizes(prog: StructuredProgram) -> SizeReport:
    E = prog.edge_count
    edge_vars = prog.var_owner == OWNER_EDGE
    edge_rows = prog.row_owner == OWNER_EDGE
    per_edge_primal = np.bincount(prog.var_owner_index[edge_vars], minlength=E)[:E] if E else np.zeros(0, dtype=int)
    per_edge_rows = np.bincount(prog.row_owner_index[edge_rows], minlength=E)[:E] if E else np.zeros(0, dtype=int)
    node_primal = int(np.count_nonzero(prog.var_owner == OWNER_NODE))
    node_rows = int(np.count_nonzero(prog.row_owner == OWNER_NODE))
    other_primal = int(np.count_nonzero(prog.var_owner == OWNER_OTHER))
    other_rows = int(np.count_nonzero(prog.row_owner == OWNER_OTHER))
    return SizeReport(
        per_edge_primal=per_edge_primal.astype(int).tolist(),
        per_edge_rows=per_edge_rows.astype(int).tolist(),
        node_primal=node_primal,
        node_rows=node_rows,
        other_primal=other_primal,
        other_rows=other_rows,
        total_primal=prog.n_primal,
        total_rows=prog.n_rows,
    )

def lift_labeling(inst: MrfInstance, a, prog: StructuredProgram) -> np.ndarray:
    """Punto primal entero correspondiente a un etiquetado."""
    if not isinstance(a, LabelAssignment):
        a = LabelAssignment(np.asarray(a))
    a.validate(inst.node_count, inst.labels)
    if prog.lifter is None:
        raise ValueError(f"el programa {prog.name} no sabe levantar etiquetados")
    return prog.lifter(a.labels)

def prefix_values(prog: StructuredProgram, x: np.ndarray, block: int) -> np.ndarray:
    """Y^0..Y^L de un bloque prefijo."""
    off, length = prog.prefix_offsets[block], prog.prefix_lengths[block]
    Y = np.zeros(length + 1)
    Y[1:] = np.cumsum(x[off:off + length])
    return Y

def row_values(prog: StructuredProgram, x: np.ndarray) -> np.ndarray:
    """Kx - b evaluado átomo por átomo (referencia lenta, sin running sums)."""
    out = np.bincount(prog.atom_rows, weights=prog.atom_coef * x[prog.atom_vars], minlength=prog.n_rows)
    for r, blk, c, coef in zip(prog.patom_rows, prog.patom_block, prog.patom_cum, prog.patom_coef):
        off = prog.prefix_offsets[blk]
        out[r] += coef * x[off:off + c].sum()
    return out - prog.rhs

def row_penalty(prog: StructuredProgram, v: np.ndarray, tol: float = 1e-9) -> float:
    """Σ_r g_r(v_r); +inf si se viola una igualdad o una restricción dura."""
    total = 0.0
    free = prog.row_class == FREE
    if np.any(np.abs(v[free]) > tol):
        return INFINITE_ENERGY
    iv = prog.row_class == INTERVAL
    vi, lo, hi = v[iv], prog.row_lo[iv], prog.row_hi[iv]
    pos, neg = vi > tol, vi < -tol
    if np.any(pos & np.isinf(hi)) or np.any(neg & np.isinf(lo)):
        return INFINITE_ENERGY
    total += float(np.sum(hi[pos] * vi[pos]) + np.sum(lo[neg] * vi[neg]))
    l2 = prog.row_class == L2BALL
    if np.any(l2):
        sq = np.bincount(prog.row_group[l2], weights=v[l2] ** 2, minlength=prog.group_radius.size)
        total += float(np.dot(prog.group_radius, np.sqrt(sq)))
    return total

def primal_feasible(prog: StructuredProgram, x: np.ndarray, tol: float = 1e-9) -> bool:
    if np.any(x < prog.var_lo - tol) or np.any(x > prog.var_hi + tol):
        return False
    for idx in prog.simplex_index.values():
        if np.any(np.abs(x[idx].sum(axis=1) - 1.0) > tol):
            return False
    return True

def objective_value(prog: StructuredProgram, x: np.ndarray, tol: float = 1e-9) -> float:
    """c·x + const + Σ_r g_r((Kx - b)_r); +inf fuera del dominio."""
    x = np.asarray(x, dtype=float)
    if x.shape != (prog.n_primal,):
        raise ValueError(f"dimensión primal {x.shape}, se esperaba ({prog.n_primal},)")
    if not primal_feasible(prog, x, tol):
        return INFINITE_ENERGY
    penalty = row_penalty(prog, row_values(prog, x), tol)
    if not math.isfinite(penalty):
        return INFINITE_ENERGY
    return float(np.dot(prog.cost, x) + prog.constant + penalty)

def dump_program(prog: StructuredProgram) -> str:
    """Una línea por fila dual, para inspección."""
    terms: Dict[int, List[str]] = {}
    for r, v, c in zip(prog.atom_rows, prog.atom_vars, prog.atom_coef):
        terms.setdefault(int(r), []).append(f"{c:+g}*x[{v}]")
    for r, blk, i, c in zip(prog.patom_rows, prog.patom_block, prog.patom_cum, prog.patom_coef):
        terms.setdefault(int(r), []).append(f"{c:+g}*Y[{blk}]^{i}")
    lines = [f"# {prog.name}: {prog.n_primal} primales, {prog.n_rows} filas, const={prog.constant:g}"]
    for r in range(prog.n_rows):
        cls = int(prog.row_class[r])
        if cls == FREE:
            prox = PROX_NAMES[cls].value
        elif cls == INTERVAL:
            prox = f"interval[{prog.row_lo[r]:g},{prog.row_hi[r]:g}]"
        else:
            g = int(prog.row_group[r])
            prox = f"l2ball(g{g},r={prog.group_radius[g]:g})"
        body = " ".join(terms.get(r, [])) or "0"
        lines.append(f"r{r} {prox}: {body} - {prog.rhs[r]:g}")
    return "\n".join(lines)
