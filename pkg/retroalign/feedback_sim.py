"""
Slot-Level Channel Simulation

Draws channel realizations and executes transmissions slot by slot, keeping
what every node can compute. Receivers collect one noise-free equation per
slot. Transmitters gain side information according to the feedback model:

- full-duplex delayed CSIT: each transmitter hears the other transmitters
  within the slot and learns all channel matrices one slot later;
- output feedback: each transmitter gets its paired receiver's output one
  slot later, but no channel knowledge, so the output is held as an opaque
  token it can forward but not cancel;
- Shannon feedback: delayed CSIT plus output feedback, so fed-back outputs
  are ordinary linear forms in the information symbols.
"""

import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Set, TextIO, Union

import numpy as np

from .alignment_core import (
    EchelonBasis,
    Field,
    FieldElem,
    LinearExpr,
    SymbolId,
    SymbolPool,
    channel_gain,
    decodable,
    generic_rank,
    get_field,
    spawn_streams,
)
from .dof_analysis import ModelId

logger = logging.getLogger(__name__)


class FeasibilityError(ValueError):
    """A transmitter was scheduled to send something it cannot compute."""


def channel_stream(seed: int) -> np.random.Generator:
    return spawn_streams(seed, 2)[0]


def coefficient_stream(seed: int) -> np.random.Generator:
    """Offline combination coefficients, independent of the channel draws."""
    return spawn_streams(seed, 2)[1]


@dataclass
class ChannelRealization:
    """Per-slot channel matrices for a whole run."""
    T: int                                   # horizon in slots
    K_rx: int                                # receivers
    M_tx: int                                # transmitters
    mode: str                                # "prime" or "complex"
    cross: List[List[List[FieldElem]]]       # cross[t][j][i] = h^[ji](t), TX i -> RX j
    fullduplex: Optional[List[List[List[FieldElem]]]] = None  # fullduplex[t][i][i'], zero diagonal

    @property
    def fld(self) -> Field:
        return get_field(self.mode)

    def encode_slot(self, t: int) -> List[List[object]]:
        return [[self.fld.encode(h) for h in row] for row in self.cross[t]]


def generate_channel(
    K_rx: int,
    M_tx: int,
    T: int,
    seed: int,
    field: str = "prime",
    fullduplex: bool = False,
) -> ChannelRealization:
    """
    Draw i.i.d. channel coefficients for T slots.

    Args:
        K_rx: Number of receivers
        M_tx: Number of transmitters
        T: Horizon in slots (>= 1)
        seed: Channel seed; equal seeds give equal realizations
        field: "prime" (uniform nonzero residues) or "complex" (circular Gaussian)
        fullduplex: Also draw the transmitter-to-transmitter matrices

    Returns:
        ChannelRealization with T matrices of size K_rx x M_tx

    Raises:
        ValueError: If T < 1 or a dimension is not positive
    """
    if T < 1:
        raise ValueError(f"Channel horizon must be at least one slot (got T={T})")
    if K_rx < 1 or M_tx < 1:
        raise ValueError(f"Channel needs at least one node per side (got K={K_rx}, M={M_tx})")
    fld = get_field(field)
    rng = channel_stream(seed)
    cross = []
    fd: Optional[List[List[List[FieldElem]]]] = [] if fullduplex else None
    for t in range(T):
        draws = [channel_gain(h, t) for h in fld.random_nonzero(K_rx * M_tx, rng)]
        cross.append([draws[j * M_tx:(j + 1) * M_tx] for j in range(K_rx)])
        if fd is not None:
            draws = [channel_gain(h, t) for h in fld.random_nonzero(M_tx * M_tx, rng)]
            fd.append([
                [fld.zero if i == k else draws[i * M_tx + k] for k in range(M_tx)]
                for i in range(M_tx)
            ])
    return ChannelRealization(T, K_rx, M_tx, fld.name, cross, fd)


@dataclass
class SlotPlan:
    """Transmissions of one slot; absent transmitters are silent."""
    t: int
    transmissions: Dict[int, LinearExpr] = field(default_factory=dict)
    expanded: Dict[int, LinearExpr] = field(default_factory=dict)  # filled by apply_slot: tokens replaced


@dataclass
class NodeState:
    """Knowledge of every node after the slots executed so far."""
    model: ModelId
    K_rx: int
    M_tx: int
    fld: Field
    strict: bool = True
    pool: SymbolPool = field(default_factory=SymbolPool)
    received_eqs: List[List[LinearExpr]] = field(default_factory=list)   # [j][t]
    tx_side_info: List[List[LinearExpr]] = field(default_factory=list)   # [i] grows only
    tx_knowledge: List[EchelonBasis] = field(default_factory=list)       # [i] span of side info
    feedback: Dict[int, List[LinearExpr]] = field(default_factory=dict)  # [j][t] what TX_j holds of y_j(t)
    token_values: Dict[SymbolId, LinearExpr] = field(default_factory=dict)
    tx_csi_through: List[int] = field(default_factory=list)  # channel matrices known to TX_i: slots < value
    rx_csi_through: int = 0
    violations: List[str] = field(default_factory=list)
    slots: List[SlotPlan] = field(default_factory=list)

    @classmethod
    def initial(
        cls,
        model: ModelId,
        K_rx: int,
        M_tx: int,
        fld: Field,
        strict: bool = True,
        pool: Optional[SymbolPool] = None,
    ) -> "NodeState":
        state = cls(model=model, K_rx=K_rx, M_tx=M_tx, fld=fld, strict=strict,
                    pool=pool or SymbolPool())
        state.received_eqs = [[] for _ in range(K_rx)]
        state.tx_side_info = [[] for _ in range(M_tx)]
        state.tx_knowledge = [EchelonBasis(fld) for _ in range(M_tx)]
        state.feedback = {j: [] for j in range(min(K_rx, M_tx))} if model.has_output_feedback else {}
        state.tx_csi_through = [0] * M_tx
        return state

    @property
    def slots_elapsed(self) -> int:
        return len(self.slots)

    def grant_tx(self, i: int, expr: LinearExpr) -> None:
        """Give TX_i the ability to compute expr."""
        if expr.is_zero():
            return
        self.tx_side_info[i].append(expr)
        if self.fld.name == "prime":
            self.tx_knowledge[i].add(expr)

    def expand(self, expr: LinearExpr) -> LinearExpr:
        """Replace fed-back tokens by the receiver outputs they stand for."""
        return expr.substitute(self.token_values) if self.token_values else expr


def uses_unknown_csi(state: NodeState, i: int, target: LinearExpr) -> bool:
    """Whether target's coefficients depend on channel slots TX_i has not learned."""
    return target.csi_slot >= state.tx_csi_through[i]


def tx_can_form(state: NodeState, i: int, target: LinearExpr) -> bool:
    """
    Whether TX_i can compute target from its own symbols and side information.

    Coefficients taken from channel matrices TX_i does not know yet make
    target infeasible whatever its span. Otherwise prime mode tests span
    membership exactly and complex mode compares SVD ranks of the side
    information with and without target.
    """
    if target.is_zero():
        return True
    if uses_unknown_csi(state, i, target):
        return False
    if state.fld.name == "prime":
        return state.tx_knowledge[i].contains(target)
    rows = state.tx_side_info[i]
    if not rows:
        return False
    return generic_rank(rows, state.fld) == generic_rank(rows + [target], state.fld)


def _record_violation(state: NodeState, message: str) -> None:
    if state.strict:
        raise FeasibilityError(message)
    state.violations.append(message)
    logger.warning("Feasibility violation: %s", message)


def apply_slot(
    state: NodeState,
    plan: SlotPlan,
    ch: ChannelRealization,
    model: Optional[ModelId] = None,
) -> NodeState:
    """
    Execute one slot: deliver receptions and update side information.

    The state is updated in place and returned.

    Args:
        state: Node knowledge before the slot
        plan: Transmissions of slot plan.t
        ch: Channel realization covering plan.t
        model: Side-information model (defaults to the state's)

    Returns:
        The updated NodeState

    Raises:
        ValueError: If the slot index or a transmitter index is invalid
        FeasibilityError: In strict mode, if a transmitter cannot form its signal
    """
    model = model or state.model
    t = plan.t
    if t != state.slots_elapsed:
        raise ValueError(f"Slot {t} scheduled but {state.slots_elapsed} slots have elapsed")
    if t >= ch.T:
        raise ValueError(f"Slot {t} is beyond the channel horizon T={ch.T}")
    fld = state.fld

    expanded: Dict[int, LinearExpr] = {}
    for i, x in sorted(plan.transmissions.items()):
        if not 0 <= i < state.M_tx:
            raise ValueError(f"Slot {t}: transmitter index {i} outside [0, {state.M_tx})")
        if not x.is_zero() and uses_unknown_csi(state, i, x):
            _record_violation(
                state,
                f"slot {t}: TX{i} uses channel coefficients of slot {x.csi_slot} "
                f"but knows slots < {state.tx_csi_through[i]}",
            )
        elif not tx_can_form(state, i, x):
            _record_violation(state, f"slot {t}: TX{i} cannot form {x!r}")
        expanded[i] = state.expand(x)

    senders = sorted(expanded)
    signals = [expanded[i] for i in senders]
    H = ch.cross[t]
    outputs = []
    for j in range(state.K_rx):
        y = LinearExpr.combination(signals, [H[j][i] for i in senders], fld)
        state.received_eqs[j].append(y)
        outputs.append(y)
    state.rx_csi_through = t + 1

    if model.uses_fullduplex and ch.fullduplex is not None:
        Hfd = ch.fullduplex[t]
        for i in range(state.M_tx):
            others = [k for k in senders if k != i]
            if others:
                heard = LinearExpr.combination(
                    [expanded[k] for k in others], [Hfd[i][k] for k in others], fld
                )
                state.grant_tx(i, heard)

    if model.has_output_feedback:
        for j in state.feedback:
            y = outputs[j]
            if model.has_delayed_csit or y.is_zero():
                view = y
            else:
                token = state.pool.mint(owner_tx=j, intended_rx=j, kind="feedback")
                state.token_values[token] = y
                view = LinearExpr.unit(token, fld)
            state.feedback[j].append(view)
            state.grant_tx(j, view)

    if model.has_delayed_csit:
        state.tx_csi_through = [t + 1] * state.M_tx

    state.slots.append(replace(plan, transmissions=dict(plan.transmissions), expanded=expanded))
    return state


@dataclass
class SimReport:
    """Outcome of one simulated run."""
    symbols_injected: int
    slots_used: int
    per_rx_decodable: Dict[int, bool]
    empirical_dof: Optional[Fraction]
    feasibility_violations: List[str] = field(default_factory=list)
    division_undefined: bool = False
    analytic_only: bool = False
    analytic_dof: Optional[Fraction] = None
    model: str = ""
    K: int = 0
    M: int = 0
    seed: Optional[int] = None
    field_mode: str = "prime"

    @property
    def all_decodable(self) -> bool:
        return bool(self.per_rx_decodable) and all(self.per_rx_decodable.values())

    @property
    def matches_analytic(self) -> bool:
        return self.analytic_dof is not None and self.empirical_dof == self.analytic_dof

    @property
    def ok(self) -> bool:
        """Decodable everywhere, no violations and a defined DoF."""
        return (
            not self.analytic_only
            and not self.division_undefined
            and self.all_decodable
            and not self.feasibility_violations
        )

    def to_dict(self) -> Dict[str, object]:
        def frac(value: Optional[Fraction]) -> Optional[str]:
            return None if value is None else f"{value.numerator}/{value.denominator}"

        return {
            "model": self.model,
            "K": self.K,
            "M": self.M,
            "seed": self.seed,
            "field": self.field_mode,
            "symbols_injected": self.symbols_injected,
            "slots_used": self.slots_used,
            "per_rx_decodable": {str(j): ok for j, ok in sorted(self.per_rx_decodable.items())},
            "empirical_dof": frac(self.empirical_dof),
            "analytic_dof": frac(self.analytic_dof),
            "feasibility_violations": list(self.feasibility_violations),
            "division_undefined": self.division_undefined,
            "analytic_only": self.analytic_only,
        }


def finalize(
    state: NodeState,
    desired: Dict[int, Set[SymbolId]],
    symbols_injected: Optional[int] = None,
) -> SimReport:
    """
    Decide decodability at every receiver and compute the empirical DoF.

    Each receiver uses only its own received equations. The empirical DoF
    counts the symbols of decodable receivers per slot used. An empty run
    reports ``division_undefined`` instead of a DoF.
    """
    per_rx: Dict[int, bool] = {}
    delivered = 0
    for j in range(state.K_rx):
        targets = desired.get(j, set())
        ok = decodable(state.received_eqs[j], [], targets)
        per_rx[j] = ok
        if ok:
            delivered += len(targets)
        else:
            logger.debug("RX%d cannot decode all %d desired symbols", j, len(targets))
    if symbols_injected is None:
        symbols_injected = sum(len(v) for v in desired.values())
    slots = state.slots_elapsed
    if slots == 0:
        return SimReport(symbols_injected, 0, per_rx, None, list(state.violations),
                         division_undefined=True, field_mode=state.fld.name)
    return SimReport(
        symbols_injected=symbols_injected,
        slots_used=slots,
        per_rx_decodable=per_rx,
        empirical_dof=Fraction(delivered, slots),
        feasibility_violations=list(state.violations),
        field_mode=state.fld.name,
    )


def trace_lines(state: NodeState, ch: ChannelRealization, report: Optional[SimReport] = None) -> Iterator[str]:
    """
    JSON lines: one {t, H, transmissions} object per slot, then the report.

    Symbol keys carry their kind (``u`` fresh, ``y`` fed-back token, ``s``
    phase input). Slots that forwarded tokens also carry ``expanded``, the
    signals in information symbols as the receivers got them.
    """
    for plan in state.slots:
        record = {
            "t": plan.t,
            "H": ch.encode_slot(plan.t),
            "transmissions": {str(i): x.encode() for i, x in sorted(plan.transmissions.items())},
        }
        if any(plan.expanded.get(i) != x for i, x in plan.transmissions.items()):
            record["expanded"] = {str(i): x.encode() for i, x in sorted(plan.expanded.items())}
        yield json.dumps(record, sort_keys=True)
    if report is not None:
        yield json.dumps({"report": report.to_dict()}, sort_keys=True)


def write_trace(
    destination: Union[str, Path, TextIO],
    state: NodeState,
    ch: ChannelRealization,
    report: Optional[SimReport] = None,
) -> int:
    """Write the JSON-lines trace; returns the number of lines written."""
    lines: Iterable[str] = trace_lines(state, ch, report)
    count = 0
    if isinstance(destination, (str, Path)):
        with open(destination, "w", encoding="utf-8") as handle:
            for line in lines:
                handle.write(line + "\n")
                count += 1
    else:
        for line in lines:
            destination.write(line + "\n")
            count += 1
    return count


def format_sim_report(report: SimReport) -> str:
    """Human-readable summary block."""
    lines = []
    lines.append("=" * 50)
    lines.append("SIMULATION REPORT")
    lines.append("=" * 50)
    lines.append(f"Model:               {report.model or '-'} (K={report.K}, M={report.M})")
    lines.append(f"Field:               {report.field_mode}")
    if report.seed is not None:
        lines.append(f"Seed:                {report.seed}")
    if report.analytic_only:
        lines.append(f"Analytic DoF:        {report.analytic_dof} (analytic only, not simulated)")
        lines.append("=" * 50)
        return "\n".join(lines)
    lines.append(f"Symbols injected:    {report.symbols_injected}")
    lines.append(f"Slots used:          {report.slots_used}")
    if report.division_undefined:
        lines.append("Empirical DoF:       undefined (no slots)")
    else:
        lines.append(f"Empirical DoF:       {report.empirical_dof} ({float(report.empirical_dof or 0):.6f})")
    if report.analytic_dof is not None:
        mark = "✓" if report.matches_analytic else "✗"
        lines.append(f"Analytic DoF:        {report.analytic_dof} {mark}")
    undecoded = [j for j, ok in sorted(report.per_rx_decodable.items()) if not ok]
    lines.append(f"Receivers decoding:  {len(report.per_rx_decodable) - len(undecoded)}/{len(report.per_rx_decodable)}")
    if undecoded:
        lines.append(f"  Undecodable RX:    {', '.join(str(j) for j in undecoded)}")
    lines.append(f"Feasibility issues:  {len(report.feasibility_violations)}")
    for message in report.feasibility_violations[:5]:
        lines.append(f"  - {message}")
    lines.append("=" * 50)
    return "\n".join(lines)
