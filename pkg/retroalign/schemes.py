"""
Retrospective Alignment Schemes

Executable phase-by-phase policies for every supported model. A policy is a
list of phases, each with a per-run ledger (symbols consumed, slots used,
higher-order symbols produced) and a repetition count chosen so that every
phase consumes exactly what its predecessor produces. Running a policy drives
the slot simulator and reports the empirical DoF; ``verify_phase`` executes
one phase in isolation on synthetic inputs and checks decodability, the
holder sets of its outputs and its ledger.
"""

import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from itertools import combinations
from typing import Callable, Deque, Dict, FrozenSet, Hashable, List, Optional, Sequence, Set, Tuple

from .alignment_core import (
    Field,
    LinearExpr,
    SymbolId,
    SymbolPool,
    SymbolSpec,
    decodable,
    get_field,
    random_coeffs,
)
from .dof_analysis import (
    ICFD,
    ICOF,
    ICSF,
    XFD,
    XOF,
    XSF,
    ModelId,
    binomial,
    dof_icfd,
    dof_icfd_recursive,
    dof_icof,
    dof_icsf,
    dof_icsf_recursive,
    dof_xfd,
    dof_xfd_recursive,
    dof_xof,
    dof_xsf,
    l_lcm,
    mu_star,
    nu_star,
    q_min,
    xfd_case,
)
from .feedback_sim import (
    ChannelRealization,
    NodeState,
    SimReport,
    SlotPlan,
    apply_slot,
    coefficient_stream,
    finalize,
    generate_channel,
    tx_can_form,
)

logger = logging.getLogger(__name__)

# Largest sizes executed end to end; larger sizes are analytic only.
K_SIM_MAX = 6          # icfd, icof
K_SIM_MAX_SF = 5       # icsf
K_SIM_MAX_XOF = 8
K_SIM_MAX_XSF = 5
K_VERIFY_MAX = 8       # standalone phase checks

PoolKey = Hashable


class UnsupportedRegimeError(ValueError):
    """The requested (model, K, M) is outside what can be simulated."""


@dataclass(frozen=True)
class PhaseLedger:
    """Per-run bookkeeping of one phase."""
    consumed: int            # input symbols taken
    consumed_order: int      # their order (1 for fresh symbols)
    slots: int               # channel uses
    produced: int            # symbols handed to the next phase
    produced_order: int

    def __post_init__(self) -> None:
        if min(self.consumed, self.slots, self.produced) < 0:
            raise ValueError(f"Phase ledger counts must be non-negative: {self}")

    def scaled(self, repetitions: int) -> "PhaseLedger":
        return PhaseLedger(
            self.consumed * repetitions, self.consumed_order,
            self.slots * repetitions, self.produced * repetitions, self.produced_order,
        )


@dataclass
class Phase:
    """One phase of a policy and how often it runs."""
    name: str
    ledger: PhaseLedger
    runner: Callable[["SchemeContext"], None]
    source: Optional[int] = None       # index of the phase feeding this one
    rate: Fraction = Fraction(1)       # repetitions relative to the source phase
    fresh_input: bool = False          # consumes fresh information symbols
    repetitions: int = 1


@dataclass
class Policy:
    """A complete executable scheme for one (model, K, M)."""
    model: ModelId
    K: int
    M: int
    phases: List[Phase]
    analytic_dof: Fraction
    adaptive: bool = True              # later transmissions depend on earlier outputs
    analytic_only: bool = False
    notes: str = ""

    def total_slots(self) -> int:
        return sum(p.ledger.slots * p.repetitions for p in self.phases)

    def total_symbols(self) -> int:
        return sum(p.ledger.consumed * p.repetitions for p in self.phases if p.fresh_input)

    def expected_dof(self) -> Fraction:
        """Fresh symbols per slot implied by the ledgers."""
        if self.analytic_only or not self.phases:
            return self.analytic_dof
        return Fraction(self.total_symbols(), self.total_slots())

    def ledger_rows(self) -> List[Tuple[str, int, PhaseLedger]]:
        return [(p.name, p.repetitions, p.ledger.scaled(p.repetitions)) for p in self.phases]


@dataclass
class PhaseGroup:
    """Slots of one alignment group plus the symbols it took and produced."""
    label: str
    first_slot: int
    end_slot: int = -1
    taken: List[SymbolSpec] = field(default_factory=list)
    produced: List[SymbolSpec] = field(default_factory=list)


class SchemeContext:
    """
    Execution state of a running policy: the simulator state, the channel,
    the pools of pending multi-receiver symbols and the desired sets.
    """

    def __init__(
        self,
        model: ModelId,
        K: int,
        M: int,
        fld: Field,
        seed: int,
        horizon: int,
        strict: bool = True,
    ):
        self.model = model
        self.K = K
        self.M = M
        self.fld = fld
        self.seed = seed
        self.channel: ChannelRealization = generate_channel(
            K, M, max(horizon, 1), seed, fld.name, fullduplex=model.uses_fullduplex
        )
        self.state = NodeState.initial(model, K, M, fld, strict=strict, pool=SymbolPool())
        self.rng = coefficient_stream(seed)
        self.pools: Dict[PoolKey, Deque[SymbolSpec]] = defaultdict(deque)
        self.desired: Dict[int, Set[SymbolId]] = {j: set() for j in range(K)}
        self.groups: List[PhaseGroup] = []
        self._group: Optional[PhaseGroup] = None
        self.stats = {"taken": 0, "produced": 0}

    # -- symbols -----------------------------------------------------------

    def fresh(self, tx: int, rx: int) -> SymbolSpec:
        """Mint a fresh symbol of TX tx for RX rx."""
        sym = self.state.pool.mint(tx, rx, "fresh")
        unit = LinearExpr.unit(sym, self.fld)
        self.state.grant_tx(tx, unit)
        self.desired[rx].add(sym)
        return SymbolSpec(unit, frozenset({tx}), frozenset({rx}), label=repr(sym))

    def synthetic_input(self, holders: FrozenSet[int], desired: FrozenSet[int],
                        known: FrozenSet[int] = frozenset()) -> SymbolSpec:
        """An already-delivered input symbol for standalone phase checks."""
        sym = self.state.pool.mint(min(holders), min(desired), "input")
        unit = LinearExpr.unit(sym, self.fld)
        for tx in holders:
            self.state.grant_tx(tx, unit)
        return SymbolSpec(unit, holders, desired, known, label=repr(sym))

    def put(self, key: PoolKey, spec: SymbolSpec) -> None:
        self.pools[key].append(spec)
        self.stats["produced"] += 1
        if self._group is not None:
            self._group.produced.append(spec)

    def take(self, key: PoolKey, count: int) -> List[SymbolSpec]:
        pool = self.pools.get(key)
        if pool is None or len(pool) < count:
            have = 0 if pool is None else len(pool)
            raise RuntimeError(f"Pool {key!r} holds {have} symbols, {count} needed")
        taken = [pool.popleft() for _ in range(count)]
        self.stats["taken"] += count
        if self._group is not None:
            self._group.taken.extend(taken)
        return taken

    def pending(self) -> int:
        return sum(len(p) for p in self.pools.values())

    # -- channel -----------------------------------------------------------

    def send(self, transmissions: Dict[int, LinearExpr]) -> int:
        t = self.state.slots_elapsed
        apply_slot(self.state, SlotPlan(t, dict(transmissions)), self.channel)
        return t

    def received(self, j: int, t: int) -> LinearExpr:
        return self.state.received_eqs[j][t]

    def fed_back(self, j: int, t: int) -> LinearExpr:
        """What TX j holds of RX j's output in slot t (token or linear form)."""
        return self.state.feedback[j][t]

    def random_combination(self, exprs: Sequence[LinearExpr]) -> LinearExpr:
        return LinearExpr.combination(exprs, random_coeffs(len(exprs), self.rng, self.fld), self.fld)

    def combine(self, exprs: Sequence[LinearExpr], count: int) -> List[LinearExpr]:
        return [self.random_combination(exprs) for _ in range(count)]

    # -- groups ------------------------------------------------------------

    def begin_group(self, label: str) -> None:
        self._group = PhaseGroup(label, self.state.slots_elapsed)

    def end_group(self) -> None:
        if self._group is not None:
            self._group.end_slot = self.state.slots_elapsed
            self.groups.append(self._group)
            self._group = None


# ---------------------------------------------------------------------------
# Interference channel phases
# ---------------------------------------------------------------------------

def _ic_first_phase_fd(ctx: SchemeContext) -> None:
    # every triple: each pair sends once, the third receiver overhears
    for triple in combinations(range(ctx.K), 3):
        a, b, c = triple
        for tx_one, tx_two, listener in ((a, b, c), (b, c, a), (c, a, b)):
            u_one = ctx.fresh(tx_one, tx_one)
            u_two = ctx.fresh(tx_two, tx_two)
            t = ctx.send({tx_one: u_one.expr, tx_two: u_two.expr})
            pair = frozenset({tx_one, tx_two})
            ctx.put(("ic", pair, listener), SymbolSpec(
                ctx.received(listener, t), pair, pair, frozenset({listener})))


def _ic_first_phase_of(ctx: SchemeContext, mu: int) -> None:
    for active in combinations(range(ctx.K), mu):
        rest = [j for j in range(ctx.K) if j not in active]
        for listeners in combinations(rest, mu - 1):
            t = ctx.send({i: ctx.fresh(i, i).expr for i in active})
            group = frozenset(active)
            for j in listeners:
                ctx.put(("ic", group, j), SymbolSpec(
                    ctx.fed_back(j, t), frozenset({j}), group, frozenset({j})))


def _ic_order_phase(ctx: SchemeContext, m: int, style: str) -> None:
    """
    Order-m phase shared by the full-duplex ("fd") and output-feedback ("of")
    IC schemes. For every S of m+1 users and every set of Q-1 outside
    listeners, L/Q slots carry random combinations of the L/m symbols each
    member sends; every listener output becomes an order-(m+1) symbol.
    """
    K = ctx.K
    q, L = q_min(m, K), l_lcm(m, K)
    per_type, slots = L // m, L // q
    for S in combinations(range(K), m + 1):
        group = frozenset(S)
        rest = [j for j in range(K) if j not in group]
        for listeners in combinations(rest, q - 1):
            ctx.begin_group(f"S={S} listeners={listeners}")
            blocks: Dict[int, List[LinearExpr]] = {}
            for n, tx in enumerate(S):
                # fd: TX i_n forwards what its predecessor's receiver knows; of: its own
                p = S[n - 1] if style == "fd" else tx
                blocks[tx] = [s.expr for s in ctx.take(("ic", group - {p}, p), per_type)]
            for _ in range(slots):
                t = ctx.send({tx: ctx.random_combination(exprs) for tx, exprs in blocks.items()})
                for j in listeners:
                    if style == "fd":
                        out = SymbolSpec(ctx.received(j, t), group, group, frozenset({j}))
                    else:
                        out = SymbolSpec(ctx.fed_back(j, t), frozenset({j}), group, frozenset({j}))
                    ctx.put(("ic", group, j), out)
            ctx.end_group()


def _ic_phase_ledger(m: int, K: int) -> PhaseLedger:
    q, L = q_min(m, K), l_lcm(m, K)
    runs = binomial(K, m + 1) * binomial(K - m - 1, q - 1)
    return PhaseLedger(runs * (m + 1) * (L // m), m, runs * (L // q),
                       runs * (q - 1) * (L // q), m + 1)


def _ic_per_type(m: int, K: int) -> Tuple[int, int]:
    """(consumed, produced) per symbol type (S_m, j) and (S_{m+1}, j') in one run."""
    q, L = q_min(m, K), l_lcm(m, K)
    consumed = binomial(K - m - 1, q - 1) * (L // m)
    produced = binomial(K - m - 2, q - 2) * (L // q) if q >= 2 else 0
    return consumed, produced


def _ic_inputs(m: int, K: int, style: str) -> List[Tuple[PoolKey, int, FrozenSet[int], FrozenSet[int], FrozenSet[int]]]:
    consumed, _ = _ic_per_type(m, K)
    inputs = []
    for S in combinations(range(K), m):
        group = frozenset(S)
        for j in range(K):
            if j in group:
                continue
            holders = group if style == "fd" else frozenset({j})
            inputs.append((("ic", group, j), consumed, holders, group, frozenset({j})))
    return inputs


# ---------------------------------------------------------------------------
# Shannon-feedback IC phases
# ---------------------------------------------------------------------------

def _icsf_round_one(ctx: SchemeContext, nu: int) -> None:
    """
    nu fresh transmitters per slot, one slot per (active set, listeners,
    designated listener). The designated output waits for the order-(nu+1)
    combinations; the other nu-2 outputs travel through output-feedback phases.
    """
    K = ctx.K
    for active in combinations(range(K), nu):
        group = frozenset(active)
        rest = [j for j in range(K) if j not in group]
        for listeners in combinations(rest, nu - 1):
            heard = frozenset(listeners)
            for j0 in listeners:
                t = ctx.send({i: ctx.fresh(i, i).expr for i in active})
                for j in listeners:
                    if j == j0:
                        continue
                    ctx.put(("ic", group, j), SymbolSpec(
                        ctx.fed_back(j, t), frozenset({j}), group, frozenset({j})))
                ctx.put(("sf-wait", group, heard, j0), SymbolSpec(
                    ctx.received(j0, t), group | {j0}, group, frozenset({j0})))


def _icsf_combine(ctx: SchemeContext, nu: int) -> None:
    K = ctx.K
    for T in combinations(range(K), nu + 1):
        target = frozenset(T)
        rest = [j for j in range(K) if j not in target]
        for extra in combinations(rest, nu - 2):
            parts = []
            for j0 in T:
                key = ("sf-wait", target - {j0}, frozenset(extra) | {j0}, j0)
                parts.append(ctx.take(key, 1)[0].expr)
            for combo in ctx.combine(parts, nu):
                ctx.put(("sf", target), SymbolSpec(combo, target, target))


def _icsf_combine_ledger(nu: int, K: int) -> PhaseLedger:
    runs = binomial(K, nu + 1) * binomial(K - nu - 1, nu - 2)
    return PhaseLedger(runs * (nu + 1), nu, 0, runs * nu, nu + 1)


def _icsf_round_two(ctx: SchemeContext, m: int) -> None:
    """
    Order-m phase under Shannon feedback: inside every group of Q+m-1 users,
    each m-subset gets one slot in which its Q lowest members send; outputs at
    the other group members are folded into m combinations per (m+1)-subset.
    """
    K = ctx.K
    if m == K:
        everyone = frozenset(range(K))
        ctx.begin_group("all users")
        spec = ctx.take(("sf", everyone), 1)[0]
        ctx.send({min(spec.tx_holders): spec.expr})
        ctx.end_group()
        return
    q = q_min(m, K + 1)
    width = q + m - 1
    for G in combinations(range(K), width):
        ctx.begin_group(f"G={G}")
        outputs: Dict[Tuple[FrozenSet[int], int], LinearExpr] = {}
        for S in combinations(G, m):
            group = frozenset(S)
            specs = ctx.take(("sf", group), q)
            t = ctx.send({tx: spec.expr for tx, spec in zip(S[:q], specs)})
            for j in G:
                if j not in group:
                    outputs[(group, j)] = ctx.received(j, t)
        for T in combinations(G, m + 1):
            target = frozenset(T)
            parts = [outputs[(target - {j}, j)] for j in T]
            for combo in ctx.combine(parts, m):
                ctx.put(("sf", target), SymbolSpec(combo, target, target))
        ctx.end_group()


def _icsf_phase_ledger(m: int, K: int) -> PhaseLedger:
    if m == K:
        return PhaseLedger(1, K, 1, 0, K)
    q = q_min(m, K + 1)
    width = q + m - 1
    groups = binomial(K, width)
    slots = groups * binomial(width, m)
    return PhaseLedger(q * slots, m, slots, m * groups * binomial(width, m + 1), m + 1)


def _icsf_per_type(m: int, K: int) -> Tuple[int, int]:
    if m == K:
        return 1, 0
    q = q_min(m, K + 1)
    return binomial(K - m, q - 1) * q, binomial(K - m - 1, q - 2) * m


def _icsf_inputs(m: int, K: int) -> List[Tuple[PoolKey, int, FrozenSet[int], FrozenSet[int], FrozenSet[int]]]:
    consumed, _ = _icsf_per_type(m, K)
    return [(("sf", frozenset(S)), consumed, frozenset(S), frozenset(S), frozenset())
            for S in combinations(range(K), m)]


# ---------------------------------------------------------------------------
# X channel phases
# ---------------------------------------------------------------------------

def _xof_first_phase(ctx: SchemeContext) -> None:
    K = ctx.K
    slot_of = {}
    for j in range(K):
        slot_of[j] = ctx.send({i: ctx.fresh(i, j).expr for i in range(K)})
    for j in range(K):
        for holder in range(K):
            if holder != j:
                ctx.put(("xof", holder, j), SymbolSpec(
                    ctx.fed_back(holder, slot_of[j]), frozenset({holder}),
                    frozenset({j}), frozenset({holder})))


def _xof_pair_phase(ctx: SchemeContext) -> None:
    for a, b in combinations(range(ctx.K), 2):
        ctx.begin_group(f"pair={a},{b}")
        to_b = ctx.take(("xof", a, b), 1)[0]
        to_a = ctx.take(("xof", b, a), 1)[0]
        ctx.send({a: to_b.expr, b: to_a.expr})
        ctx.end_group()


def _xsf_round_one(ctx: SchemeContext) -> None:
    """
    For every designated receiver j0: K fresh slots, pair slots among the
    other receivers, then one order-2 symbol per other receiver j, held by TX j.
    """
    K = ctx.K
    for j0 in range(K):
        slot_of = {}
        for j in range(K):
            slot_of[j] = ctx.send({i: ctx.fresh(i, j).expr for i in range(K)})
        others = [j for j in range(K) if j != j0]
        for a, b in combinations(others, 2):
            ctx.send({a: ctx.fed_back(a, slot_of[b]), b: ctx.fed_back(b, slot_of[a])})
        for j in others:
            expr = ctx.received(j, slot_of[j0]) + ctx.received(j0, slot_of[j])
            pair = frozenset({j, j0})
            ctx.put(("x2", j, pair), SymbolSpec(expr, frozenset({j}), pair))


def _xsf_two_user_phase(ctx: SchemeContext) -> None:
    pair = frozenset({0, 1})
    for j in (0, 1):
        spec = ctx.take(("x2", j, pair), 1)[0]
        ctx.send({j: spec.expr})


def _xsf_order_two_phase(ctx: SchemeContext) -> None:
    for triple in combinations(range(ctx.K), 3):
        a, b, c = triple
        ctx.begin_group(f"triple={triple}")
        outputs = {}
        for one, two, third in ((a, b, c), (a, c, b), (b, c, a)):
            pair = frozenset({one, two})
            s_one = ctx.take(("x2", one, pair), 1)[0]
            s_two = ctx.take(("x2", two, pair), 1)[0]
            t = ctx.send({one: s_one.expr, two: s_two.expr})
            outputs[third] = ctx.received(third, t)
        target = frozenset(triple)
        for combo in ctx.combine([outputs[x] for x in triple], 2):
            ctx.put(("sf", target), SymbolSpec(combo, target, target))
        ctx.end_group()


def _xfd_first_phase(ctx: SchemeContext) -> None:
    for tx_pair in combinations(range(ctx.M), 2):
        for rx_pair in combinations(range(ctx.K), 2):
            i1, i2 = tx_pair
            j1, j2 = rx_pair
            t1 = ctx.send({i1: ctx.fresh(i1, j1).expr, i2: ctx.fresh(i2, j1).expr})
            t2 = ctx.send({i1: ctx.fresh(i1, j2).expr, i2: ctx.fresh(i2, j2).expr})
            expr = ctx.received(j2, t1) + ctx.received(j1, t2)
            ctx.put(("xfd", frozenset(tx_pair), frozenset(rx_pair)),
                    SymbolSpec(expr, frozenset(tx_pair), frozenset(rx_pair)))


def _xfd_single_sender(ctx: SchemeContext) -> None:
    spec = ctx.take(("xfd", frozenset({0, 1}), frozenset({0, 1})), 1)[0]
    ctx.send({0: spec.expr})


_XFD3_SCHEDULE = (((0, 2), (0, 1)), ((0, 2), (1, 2)), ((0, 1), (1, 2)))


def _xfd3_pair_phase(ctx: SchemeContext) -> None:
    # TX0 and TX1 serve each receiver pair; the third receiver's outputs are shared
    for rx_pair in combinations(range(3), 2):
        target = frozenset(rx_pair)
        (third,) = set(range(3)) - target
        ctx.begin_group(f"rx_pair={rx_pair}")
        for first_key, second_key in _XFD3_SCHEDULE:
            s0 = ctx.take(("xfd", frozenset(first_key), target), 1)[0]
            s1 = ctx.take(("xfd", frozenset(second_key), target), 1)[0]
            t = ctx.send({0: s0.expr, 1: s1.expr})
            ctx.put(("xfd3", target), SymbolSpec(
                ctx.received(third, t), frozenset({0, 1}), target, frozenset({third})))
        ctx.end_group()


def _xfd3_broadcast_phase(ctx: SchemeContext) -> None:
    parts = [ctx.take(("xfd3", frozenset(p)), 1)[0].expr for p in combinations(range(3), 2)]
    for combo in ctx.combine(parts, 2):
        ctx.send({0: combo})


def _xfd_pairing_phase(ctx: SchemeContext, m: int) -> None:
    """
    Full-duplex pairing phase of order m (wide-transmitter regime, 2m <= K):
    per receiver group of 2m and transmitter group of m+1, one slot per
    m-subset of the receivers, each transmitter sending the symbol held by
    its cyclic window of m transmitters.
    """
    K, M = ctx.K, ctx.M
    for R in combinations(range(K), 2 * m):
        for T in combinations(range(M), m + 1):
            holders = frozenset(T)
            ctx.begin_group(f"R={R} T={T}")
            outputs: Dict[Tuple[FrozenSet[int], int], LinearExpr] = {}
            for Sr in combinations(R, m):
                wanted = frozenset(Sr)
                plan = {}
                for n, tx in enumerate(T):
                    window = frozenset(T[(n + k) % (m + 1)] for k in range(m))
                    plan[tx] = ctx.take(("xfd", window, wanted), 1)[0].expr
                t = ctx.send(plan)
                for j in R:
                    if j not in wanted:
                        outputs[(wanted, j)] = ctx.received(j, t)
            for Rn in combinations(R, m + 1):
                target = frozenset(Rn)
                parts = [outputs[(target - {j}, j)] for j in Rn]
                for combo in ctx.combine(parts, m):
                    ctx.put(("xfd", holders, target), SymbolSpec(combo, holders, target))
            ctx.end_group()


def _xfd_phase_ledger(m: int, M: int, K: int) -> PhaseLedger:
    groups = binomial(M, m + 1) * binomial(K, 2 * m)
    slots = groups * binomial(2 * m, m)
    return PhaseLedger((m + 1) * slots, m, slots, m * groups * binomial(2 * m, m + 1), m + 1)


def _xfd_inputs(m: int, M: int, K: int) -> List[Tuple[PoolKey, int, FrozenSet[int], FrozenSet[int], FrozenSet[int]]]:
    count = (M - m) * binomial(K - m, m)
    return [
        (("xfd", frozenset(St), frozenset(Sr)), count, frozenset(St), frozenset(Sr), frozenset())
        for St in combinations(range(M), m)
        for Sr in combinations(range(K), m)
    ]


# ---------------------------------------------------------------------------
# Policy construction
# ---------------------------------------------------------------------------

def _solve_repetitions(phases: List[Phase]) -> None:
    """Smallest integer repetitions meeting every producer/consumer rate."""
    ratios: List[Fraction] = []
    for phase in phases:
        if phase.source is None:
            ratios.append(Fraction(1))
        else:
            ratios.append(ratios[phase.source] * phase.rate)
    scale = math.lcm(*(r.denominator for r in ratios))
    counts = [int(r * scale) for r in ratios]
    common = math.gcd(*counts)
    for phase, count in zip(phases, counts):
        phase.repetitions = count // common


def _check_sim_size(model: ModelId, K: int, lo: int, hi: int, allow_large: bool) -> None:
    if K < lo:
        raise UnsupportedRegimeError(f"{model.name} simulation needs K >= {lo} (got K={K})")
    if K > hi and not allow_large:
        raise UnsupportedRegimeError(
            f"{model.name} simulation is limited to K <= {hi} (got K={K}); "
            f"use the dof command for larger K"
        )


def _ic_order_phases(phases: List[Phase], K: int, first: int, style: str,
                     produced_per_type: int) -> int:
    """Append order phases first..K-1; returns the index of the last one."""
    for m in range(first, K):
        consumed, produced = _ic_per_type(m, K)
        phases.append(Phase(
            f"order {m}", _ic_phase_ledger(m, K), partial(_ic_order_phase, m=m, style=style),
            source=len(phases) - 1,
            rate=Fraction(produced_per_type, consumed),
        ))
        produced_per_type = produced
    return len(phases) - 1


def build_icfd(K: int, allow_large: bool = False) -> Policy:
    """
    Full-duplex K-user IC scheme: pairwise fresh transmissions with the third
    receiver overhearing, then order phases 2..K-1.

    Raises:
        UnsupportedRegimeError: If K is outside 3..K_SIM_MAX (unless allow_large)
    """
    _check_sim_size(ICFD, K, 3, K_SIM_MAX, allow_large)
    triples = binomial(K, 3)
    phases = [Phase("order 1", PhaseLedger(6 * triples, 1, 3 * triples, 3 * triples, 2),
                    _ic_first_phase_fd, fresh_input=True)]
    _ic_order_phases(phases, K, 2, "fd", produced_per_type=1)
    _solve_repetitions(phases)
    return Policy(ICFD, K, K, phases, dof_icfd(K))


def build_icof(K: int, allow_large: bool = False) -> Policy:
    """
    Output-feedback K-user IC scheme: mu fresh transmitters per slot with mu-1
    overhearing receivers, then order phases mu..K-1 carried by fed-back tokens.
    """
    _check_sim_size(ICOF, K, 3, K_SIM_MAX, allow_large)
    mu = mu_star(K)
    runs = binomial(K, mu) * binomial(K - mu, mu - 1)
    phases = [Phase(f"order 1 (mu={mu})", PhaseLedger(mu * runs, 1, runs, (mu - 1) * runs, mu),
                    partial(_ic_first_phase_of, mu=mu), fresh_input=True)]
    _ic_order_phases(phases, K, mu, "of", produced_per_type=binomial(K - mu - 1, mu - 2))
    _solve_repetitions(phases)
    return Policy(ICOF, K, K, phases, dof_icof(K))


def build_icsf(K: int, allow_large: bool = False) -> Policy:
    """
    Shannon-feedback K-user IC scheme in two rounds.

    Round 1 sends nu fresh symbols per slot. Listener outputs either travel
    through output-feedback phases or are combined into order-(nu+1) symbols.
    Round 2 runs the Shannon order phases nu+1..K on those combinations.
    """
    _check_sim_size(ICSF, K, 3, K_SIM_MAX_SF, allow_large)
    nu = nu_star(K)
    round_one_slots = binomial(K, nu) * binomial(K - nu, nu - 1) * (nu - 1)
    phases = [Phase(
        f"round 1 (nu={nu})",
        PhaseLedger(nu * round_one_slots, 1, round_one_slots, (nu - 1) * round_one_slots, nu),
        partial(_icsf_round_one, nu=nu), fresh_input=True,
    )]
    if nu >= 3:
        _ic_order_phases(phases, K, nu, "of",
                         produced_per_type=binomial(K - nu - 1, nu - 2) * (nu - 2))
    phases.append(Phase("combine", _icsf_combine_ledger(nu, K),
                        partial(_icsf_combine, nu=nu), source=0))
    produced_per_type = nu * binomial(K - nu - 1, nu - 2)
    for m in range(nu + 1, K + 1):
        consumed, produced = _icsf_per_type(m, K)
        phases.append(Phase(
            f"order {m}", _icsf_phase_ledger(m, K), partial(_icsf_round_two, m=m),
            source=len(phases) - 1, rate=Fraction(produced_per_type, consumed),
        ))
        produced_per_type = produced
    _solve_repetitions(phases)
    return Policy(ICSF, K, K, phases, dof_icsf(K))


def build_xof(K: int, allow_large: bool = False) -> Policy:
    """K x K X channel with output feedback: K fresh slots, then pairwise exchanges."""
    _check_sim_size(XOF, K, 2, K_SIM_MAX_XOF, allow_large)
    pairs = binomial(K, 2)
    phases = [
        Phase("fresh", PhaseLedger(K * K, 1, K, K * (K - 1), 1), _xof_first_phase, fresh_input=True),
        Phase("exchange", PhaseLedger(2 * pairs, 1, pairs, 0, 1), _xof_pair_phase, source=0),
    ]
    _solve_repetitions(phases)
    return Policy(XOF, K, K, phases, dof_xof(K))


def build_xsf(K: int, allow_large: bool = False) -> Policy:
    """
    K x K X channel with Shannon feedback.

    Round 1 turns K^2 fresh symbols per designated receiver into K-1 order-2
    symbols. Round 2 resolves the order-2 symbols in receiver triples and
    hands the order-3 combinations to the Shannon IC order phases.
    """
    _check_sim_size(XSF, K, 2, K_SIM_MAX_XSF, allow_large)
    round_one = PhaseLedger(K ** 3, 1, K * (K + binomial(K - 1, 2)), K * (K - 1), 2)
    phases = [Phase("round 1", round_one, _xsf_round_one, fresh_input=True)]
    if K == 2:
        phases.append(Phase("order 2", PhaseLedger(2, 2, 2, 0, 2), _xsf_two_user_phase, source=0))
    else:
        triples = binomial(K, 3)
        phases.append(Phase("order 2", PhaseLedger(6 * triples, 2, 3 * triples, 2 * triples, 3),
                            _xsf_order_two_phase, source=0, rate=Fraction(1, K - 2)))
        produced_per_type = 2
        for m in range(3, K + 1):
            consumed, produced = _icsf_per_type(m, K)
            phases.append(Phase(
                f"order {m}", _icsf_phase_ledger(m, K), partial(_icsf_round_two, m=m),
                source=len(phases) - 1, rate=Fraction(produced_per_type, consumed),
            ))
            produced_per_type = produced
    _solve_repetitions(phases)
    return Policy(XSF, K, K, phases, dof_xsf(K))


def build_xfd(M: int, K: int, allow_large: bool = False) -> Policy:
    """
    Full-duplex M x K X channel.

    The 2 x 2 and 3 x 3 schemes are executable. Other sizes return an
    analytic-only policy carrying the closed-form DoF.
    """
    if M < 2 or K < 2:
        raise UnsupportedRegimeError(f"xfd needs M >= 2 and K >= 2 (got M={M}, K={K})")
    first = PhaseLedger(4 * binomial(M, 2) * binomial(K, 2), 1,
                        2 * binomial(M, 2) * binomial(K, 2), binomial(M, 2) * binomial(K, 2), 2)
    if (M, K) == (2, 2):
        phases = [
            Phase("order 1", first, _xfd_first_phase, fresh_input=True),
            Phase("order 2", PhaseLedger(1, 2, 1, 0, 2), _xfd_single_sender, source=0),
        ]
    elif (M, K) == (3, 3):
        phases = [
            Phase("order 1", first, _xfd_first_phase, fresh_input=True),
            Phase("order 2 pairs", PhaseLedger(18, 2, 9, 9, 2), _xfd3_pair_phase,
                  source=0, rate=Fraction(1, 2)),
            Phase("order 2 broadcast", PhaseLedger(3, 2, 2, 0, 2), _xfd3_broadcast_phase,
                  source=1, rate=Fraction(3)),
        ]
    else:
        return Policy(XFD, K, M, [], dof_xfd(M, K), analytic_only=True,
                      notes="only the 2x2 and 3x3 full-duplex X schemes are executable")
    _solve_repetitions(phases)
    return Policy(XFD, K, M, phases, dof_xfd(M, K))


def build_policy(model: ModelId, K: int, M: Optional[int] = None, allow_large: bool = False) -> Policy:
    """Dispatch to the builder of ``model``."""
    M = model.resolve_transmitters(K, M)
    if model == ICFD:
        return build_icfd(K, allow_large)
    if model == ICOF:
        return build_icof(K, allow_large)
    if model == ICSF:
        return build_icsf(K, allow_large)
    if model == XOF:
        return build_xof(K, allow_large)
    if model == XSF:
        return build_xsf(K, allow_large)
    return build_xfd(M, K, allow_large)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def execute_policy(
    policy: Policy, seed: int = 1, field: str = "prime", strict: bool = True
) -> Tuple[SimReport, Optional[SchemeContext]]:
    """
    Run every phase of a policy and decide decodability.

    Returns:
        (report, context); the context is None for analytic-only policies

    Raises:
        FeasibilityError: In strict mode, on the first infeasible transmission
    """
    if policy.analytic_only:
        report = SimReport(0, 0, {}, None, analytic_only=True, analytic_dof=policy.analytic_dof,
                           model=policy.model.name, K=policy.K, M=policy.M, seed=seed, field_mode=field)
        return report, None
    ctx = SchemeContext(policy.model, policy.K, policy.M, get_field(field), seed,
                        policy.total_slots(), strict=strict)
    for phase in policy.phases:
        start = ctx.state.slots_elapsed
        for _ in range(phase.repetitions):
            phase.runner(ctx)
        logger.debug("%s K=%d %s: %d runs, %d slots", policy.model.name, policy.K,
                     phase.name, phase.repetitions, ctx.state.slots_elapsed - start)
    leftover = ctx.pending()
    if leftover:
        logger.warning("%s K=%d: %d symbols left undelivered", policy.model.name, policy.K, leftover)
    report = finalize(ctx.state, ctx.desired)
    report.analytic_dof = policy.analytic_dof
    report.model = policy.model.name
    report.K = policy.K
    report.M = policy.M
    report.seed = seed
    logger.info("%s K=%d M=%d seed=%d: %s symbols in %d slots, empirical DoF %s",
                policy.model.name, policy.K, policy.M, seed, report.symbols_injected,
                report.slots_used, report.empirical_dof)
    return report, ctx


def run_policy(policy: Policy, seed: int = 1, field: str = "prime", strict: bool = True) -> SimReport:
    """Execute a policy and return only its SimReport."""
    report, _ = execute_policy(policy, seed=seed, field=field, strict=strict)
    return report


# ---------------------------------------------------------------------------
# Standalone phase checks
# ---------------------------------------------------------------------------

@dataclass
class PhaseVerdict:
    """Outcome of ``verify_phase``."""
    model: str
    m: int
    K: int
    M: int
    decodable: bool
    holders_ok: bool
    ledger_ok: bool
    recursion_ok: bool
    measured: PhaseLedger
    expected: PhaseLedger
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.decodable and self.holders_ok and self.ledger_ok and self.recursion_ok


def _phase_plan(model: ModelId, m: int, K: int, M: int):
    """Runner, ledger, input types and next-order DoF of one standalone phase."""
    if model in (ICFD, ICOF):
        if K < 3 or not 2 <= m <= K - 1:
            raise UnsupportedRegimeError(f"{model.name} phases need K >= 3 and 2 <= m <= K-1 (got m={m}, K={K})")
        style = "fd" if model == ICFD else "of"
        next_dof = dof_icfd_recursive(m + 1, K) if m + 1 <= K - 1 else None
        return (partial(_ic_order_phase, m=m, style=style), _ic_phase_ledger(m, K),
                _ic_inputs(m, K, style), dof_icfd_recursive(m, K), next_dof)
    if model == ICSF:
        if K < 3 or not 2 <= m <= K:
            raise UnsupportedRegimeError(f"icsf phases need K >= 3 and 2 <= m <= K (got m={m}, K={K})")
        next_dof = dof_icsf_recursive(m + 1, K) if m < K else None
        return (partial(_icsf_round_two, m=m), _icsf_phase_ledger(m, K), _icsf_inputs(m, K),
                dof_icsf_recursive(m, K), next_dof)
    if model == XFD:
        if M < 2 or K < 4 or not 2 <= m <= K - 1 or xfd_case(m, M, K) != "i" or m + 1 > M:
            raise UnsupportedRegimeError(
                f"xfd standalone phases cover the wide-transmitter pairing regime "
                f"(2M > K, 2m <= K, m < M); got m={m}, M={M}, K={K}"
            )
        return (partial(_xfd_pairing_phase, m=m), _xfd_phase_ledger(m, M, K), _xfd_inputs(m, M, K),
                dof_xfd_recursive(m, M, K), dof_xfd_recursive(m + 1, M, K))
    raise UnsupportedRegimeError(f"No standalone phase check for {model.name}")


def verify_phase(
    model: ModelId,
    m: int,
    K: int,
    M: Optional[int] = None,
    seed: int = 1,
    field: str = "prime",
) -> PhaseVerdict:
    """
    Execute phase m once on synthetic inputs and check it.

    Inputs are fresh indeterminates granted to their holders. Every receiver
    must decode the inputs it desires in each alignment group from that
    group's receptions, its known inputs and the outputs it is granted; every
    transmitter listed as holder of an output must be able to form it; the
    measured consumption, slots and production must match the ledger, and the
    ledger must reproduce the phase's DoF recursion.

    Raises:
        UnsupportedRegimeError: For phases outside the executable regimes
    """
    if model in (XOF, XSF):
        raise UnsupportedRegimeError(f"No standalone phase check for {model.name}")
    M = K if model.channel == "IC" else (M if M is not None else K)
    if K > K_VERIFY_MAX:
        raise UnsupportedRegimeError(f"Phase checks are limited to K <= {K_VERIFY_MAX} (got K={K})")
    runner, expected, inputs, dof_m, dof_next = _phase_plan(model, m, K, M)
    fld = get_field(field)
    ctx = SchemeContext(model, K, M, fld, seed, expected.slots, strict=False)
    for key, count, holders, desired, known in inputs:
        for _ in range(count):
            ctx.pools[key].append(ctx.synthetic_input(holders, desired, known))
    ctx.stats = {"taken": 0, "produced": 0}
    runner(ctx)
    failures: List[str] = []

    measured = PhaseLedger(ctx.stats["taken"], expected.consumed_order, ctx.state.slots_elapsed,
                           ctx.stats["produced"], expected.produced_order)
    ledger_ok = measured == expected and ctx.pending() == measured.produced
    if not ledger_ok:
        failures.append(f"ledger: measured {measured}, expected {expected}, "
                        f"{ctx.pending() - measured.produced} inputs unused")

    ratio_denominator = Fraction(expected.slots)
    if expected.produced:
        ratio_denominator += Fraction(expected.produced) / dof_next
    recursion_ok = Fraction(expected.consumed) / ratio_denominator == dof_m
    if not recursion_ok:
        failures.append(f"recursion: ledger ratio differs from DoF_{m} = {dof_m}")

    is_decodable = True
    for group in ctx.groups:
        slots = range(group.first_slot, group.end_slot)
        for j in range(K):
            targets = {s for spec in group.taken if j in spec.rx_desired for s in spec.expr.support()}
            if not targets:
                continue
            known = [spec.expr for spec in group.taken if j in spec.rx_known]
            known += [ctx.state.expand(spec.expr) for spec in group.produced if j in spec.rx_desired]
            eqs = [ctx.received(j, t) for t in slots]
            if not decodable(eqs, known, targets):
                is_decodable = False
                failures.append(f"decode: RX{j} in group {group.label}")

    holders_ok = True
    for group in ctx.groups:
        for spec in group.produced:
            for tx in spec.tx_holders:
                if not tx_can_form(ctx.state, tx, spec.expr):
                    holders_ok = False
                    failures.append(f"holder: TX{tx} cannot form an output of group {group.label}")
    holders_ok = holders_ok and not ctx.state.violations
    failures.extend(f"transmit: {v}" for v in ctx.state.violations)

    verdict = PhaseVerdict(model.name, m, K, M, is_decodable, holders_ok, ledger_ok, recursion_ok,
                           measured, expected, failures)
    logger.debug("verify_phase %s m=%d K=%d M=%d: %s", model.name, m, K, M,
                 "ok" if verdict.ok else failures[:3])
    return verdict
