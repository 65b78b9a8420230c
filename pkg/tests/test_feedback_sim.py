"""
Test Feedback Simulator

Unit tests for channel draws, slot execution under each side-information model and reports.
"""

import io
import json
from fractions import Fraction

import pytest

from retroalign.alignment_core import COMPLEX_FIELD, PRIME_FIELD, LinearExpr, decodable
from retroalign.dof_analysis import ICFD, ICOF, ICSF
from retroalign.feedback_sim import (
    FeasibilityError,
    NodeState,
    SimReport,
    SlotPlan,
    apply_slot,
    finalize,
    format_sim_report,
    generate_channel,
    trace_lines,
    tx_can_form,
    write_trace,
)


def two_user_state(model, strict=True, fld=PRIME_FIELD):
    """Two-user state where each TX owns one fresh symbol for its RX."""
    state = NodeState.initial(model, 2, 2, fld, strict=strict)
    symbols = []
    for i in range(2):
        (u,) = state.pool.mint_fresh(1, owner_tx=i, intended_rx=i)
        state.grant_tx(i, LinearExpr.unit(u, fld))
        symbols.append(u)
    return state, symbols


def send_both(state, symbols, ch, t=0):
    """Both transmitters send their own symbol in slot t."""
    plan = SlotPlan(t, {i: LinearExpr.unit(u, state.fld) for i, u in enumerate(symbols)})
    return apply_slot(state, plan, ch)


class TestChannel:
    """Test channel generation."""

    def test_deterministic_in_seed(self):
        """Test that equal seeds give equal channels and different seeds differ."""
        a = generate_channel(3, 3, 4, seed=9)
        b = generate_channel(3, 3, 4, seed=9)
        c = generate_channel(3, 3, 4, seed=10)
        assert a.cross == b.cross
        assert a.cross != c.cross

    def test_shapes_and_nonzero(self):
        """Test dimensions and nonzero prime draws."""
        ch = generate_channel(2, 3, 5, seed=1)
        assert len(ch.cross) == 5
        assert all(len(row) == 3 for H in ch.cross for row in H)
        assert all(h != 0 for H in ch.cross for row in H for h in row)
        assert ch.fullduplex is None

    def test_fullduplex_zero_diagonal(self):
        """Test that a transmitter does not hear itself."""
        ch = generate_channel(3, 3, 2, seed=4, fullduplex=True)
        for Hfd in ch.fullduplex:
            assert all(Hfd[i][i] == 0 for i in range(3))
            assert Hfd[0][1] != 0

    def test_invalid_horizon(self):
        """Test that T < 1 is rejected."""
        with pytest.raises(ValueError):
            generate_channel(2, 2, 0, seed=1)

    def test_complex_mode(self):
        """Test complex draws."""
        ch = generate_channel(2, 2, 1, seed=3, field="complex")
        assert isinstance(ch.cross[0][0][0], complex)
        assert ch.fld is COMPLEX_FIELD


class TestApplySlot:
    """Test slot execution under each model."""

    def test_receivers_get_one_equation(self):
        """Test that every receiver records one equation per slot."""
        state, syms = two_user_state(ICFD)
        ch = generate_channel(2, 2, 2, seed=1, fullduplex=True)
        send_both(state, syms, ch)
        assert all(len(eqs) == 1 for eqs in state.received_eqs)
        assert state.slots_elapsed == 1
        assert state.rx_csi_through == 1

    def test_fullduplex_learns_other_signal(self):
        """Test that a full-duplex TX can form the other TX's symbol afterwards."""
        state, syms = two_user_state(ICFD)
        ch = generate_channel(2, 2, 1, seed=1, fullduplex=True)
        before = LinearExpr.unit(syms[1], PRIME_FIELD)
        assert not tx_can_form(state, 0, before)
        send_both(state, syms, ch)
        assert tx_can_form(state, 0, before)
        assert state.tx_csi_through == [1, 1]

    def test_output_feedback_mints_token(self):
        """Test that output feedback without CSIT hands over an opaque token."""
        state, syms = two_user_state(ICOF)
        ch = generate_channel(2, 2, 1, seed=2)
        send_both(state, syms, ch)
        (view,) = state.feedback[0]
        (token,) = view.support()
        assert token.kind == "feedback"
        assert state.token_values[token] == state.received_eqs[0][0]
        assert tx_can_form(state, 0, view)
        # without CSIT the TX cannot separate the other user's symbol
        assert not tx_can_form(state, 0, LinearExpr.unit(syms[1], PRIME_FIELD))
        assert state.tx_csi_through == [0, 0]

    def test_token_expands_before_reception(self):
        """Test that a forwarded token reaches receivers as the original output."""
        state, syms = two_user_state(ICOF)
        ch = generate_channel(2, 2, 2, seed=2)
        send_both(state, syms, ch)
        token_view = state.feedback[0][0]
        apply_slot(state, SlotPlan(1, {0: token_view}), ch)
        # RX1 now holds a multiple of y_0(0) plus its own output: both symbols decode
        assert decodable(state.received_eqs[1], [], syms)

    def test_shannon_feedback_separates(self):
        """Test that Shannon feedback lets a TX solve for the other symbol."""
        state, syms = two_user_state(ICSF)
        ch = generate_channel(2, 2, 1, seed=3)
        send_both(state, syms, ch)
        assert state.feedback[0][0] == state.received_eqs[0][0]
        assert tx_can_form(state, 0, LinearExpr.unit(syms[1], PRIME_FIELD))

    def test_complex_feasibility(self):
        """Test rank-based feasibility in complex mode."""
        state, syms = two_user_state(ICSF, fld=COMPLEX_FIELD)
        ch = generate_channel(2, 2, 1, seed=3, field="complex")
        assert not tx_can_form(state, 0, LinearExpr.unit(syms[1], COMPLEX_FIELD))
        send_both(state, syms, ch)
        assert tx_can_form(state, 0, LinearExpr.unit(syms[1], COMPLEX_FIELD))

    def test_strict_infeasible_raises(self):
        """Test that sending another TX's symbol fails in strict mode."""
        state, syms = two_user_state(ICOF)
        ch = generate_channel(2, 2, 1, seed=1)
        plan = SlotPlan(0, {0: LinearExpr.unit(syms[1], PRIME_FIELD)})
        with pytest.raises(FeasibilityError):
            apply_slot(state, plan, ch)

    def test_lenient_records_violation(self):
        """Test that non-strict mode records the violation and continues."""
        state, syms = two_user_state(ICOF, strict=False)
        ch = generate_channel(2, 2, 1, seed=1)
        plan = SlotPlan(0, {0: LinearExpr.unit(syms[1], PRIME_FIELD)})
        apply_slot(state, plan, ch)
        assert len(state.violations) == 1
        assert "TX0" in state.violations[0]

    def test_slot_order_and_indices(self):
        """Test slot ordering, horizon and transmitter index checks."""
        state, syms = two_user_state(ICFD)
        ch = generate_channel(2, 2, 1, seed=1, fullduplex=True)
        with pytest.raises(ValueError):
            apply_slot(state, SlotPlan(1, {}), ch)
        with pytest.raises(ValueError):
            apply_slot(state, SlotPlan(0, {5: LinearExpr.unit(syms[0], PRIME_FIELD)}), ch)
        send_both(state, syms, ch)
        with pytest.raises(ValueError):
            apply_slot(state, SlotPlan(1, {}), ch)


class TestReports:
    """Test finalize, traces and formatting."""

    def test_finalize_single_slot(self):
        """Test that one slot of two symbols decodes nowhere."""
        state, syms = two_user_state(ICSF)
        ch = generate_channel(2, 2, 1, seed=5)
        send_both(state, syms, ch)
        report = finalize(state, {0: {syms[0]}, 1: {syms[1]}})
        assert report.slots_used == 1
        assert report.symbols_injected == 2
        assert report.per_rx_decodable == {0: False, 1: False}
        assert report.empirical_dof == 0
        assert not report.ok

    def test_finalize_empty_run(self):
        """Test that zero slots leave the DoF undefined."""
        state, _ = two_user_state(ICFD)
        report = finalize(state, {0: set(), 1: set()})
        assert report.division_undefined
        assert report.empirical_dof is None
        assert not report.ok

    def test_to_dict_fractions(self):
        """Test num/den rendering."""
        report = SimReport(6, 5, {0: True}, Fraction(6, 5), analytic_dof=Fraction(6, 5))
        data = report.to_dict()
        assert data["empirical_dof"] == "6/5"
        assert report.matches_analytic

    def test_trace_lines(self):
        """Test one JSON line per slot plus the report line."""
        state, syms = two_user_state(ICFD)
        ch = generate_channel(2, 2, 1, seed=1, fullduplex=True)
        send_both(state, syms, ch)
        report = finalize(state, {0: {syms[0]}, 1: {syms[1]}})
        lines = list(trace_lines(state, ch, report))
        assert len(lines) == 2
        first = json.loads(lines[0])
        assert first["t"] == 0
        assert set(first["transmissions"]) == {"0", "1"}
        assert "report" in json.loads(lines[1])
        buffer = io.StringIO()
        assert write_trace(buffer, state, ch, report) == 2

    def test_format_report(self):
        """Test the framed summary."""
        state, syms = two_user_state(ICFD)
        ch = generate_channel(2, 2, 1, seed=1, fullduplex=True)
        send_both(state, syms, ch)
        text = format_sim_report(finalize(state, {0: {syms[0]}, 1: {syms[1]}}))
        assert "SIMULATION REPORT" in text
        assert "Receivers decoding:  0/2" in text


class TestChannelCausality:
    """Test that transmitters only use channel coefficients they have learned."""

    def three_user_after_one_slot(self, strict=True):
        """ICFD with three users after TX0 sends u and TX1 sends v in slot 0."""
        state = NodeState.initial(ICFD, 3, 3, PRIME_FIELD, strict=strict)
        syms = []
        for i in range(2):
            (u,) = state.pool.mint_fresh(1, owner_tx=i, intended_rx=i)
            state.grant_tx(i, LinearExpr.unit(u, PRIME_FIELD))
            syms.append(u)
        ch = generate_channel(3, 3, 2, seed=1, fullduplex=True)
        apply_slot(state, SlotPlan(0, {i: LinearExpr.unit(u, PRIME_FIELD) for i, u in enumerate(syms)}), ch)
        return state, syms, ch

    def weighted(self, syms, gains):
        return LinearExpr.combination([LinearExpr.unit(u, PRIME_FIELD) for u in syms], gains, PRIME_FIELD)

    def test_received_output_carries_slot(self):
        """Test that receptions depend on the channel of their own slot."""
        state, _, _ = self.three_user_after_one_slot()
        assert all(eqs[0].csi_slot == 0 for eqs in state.received_eqs)

    def test_current_slot_coefficients_rejected(self):
        """Test that weighting by the current slot's channel is infeasible."""
        state, syms, ch = self.three_user_after_one_slot()
        H1 = ch.cross[1]
        target = self.weighted(syms, [H1[2][0], H1[2][1]])
        assert state.tx_csi_through == [1, 1, 1]
        assert target.csi_slot == 1
        assert not tx_can_form(state, 0, target)
        with pytest.raises(FeasibilityError, match="channel coefficients of slot 1"):
            apply_slot(state, SlotPlan(1, {0: target}), ch)

    def test_current_slot_violation_recorded(self):
        """Test that lenient mode records the same transmission."""
        state, syms, ch = self.three_user_after_one_slot(strict=False)
        H1 = ch.cross[1]
        apply_slot(state, SlotPlan(1, {0: self.weighted(syms, [H1[2][0], H1[2][1]])}), ch)
        assert len(state.violations) == 1
        assert "slot 1" in state.violations[0]

    def test_past_slot_coefficients_allowed(self):
        """Test that channel coefficients of earlier slots are usable."""
        state, syms, ch = self.three_user_after_one_slot()
        H0 = ch.cross[0]
        target = self.weighted(syms, [H0[2][0], H0[2][1]])
        assert target == state.received_eqs[2][0]
        assert tx_can_form(state, 0, target)
        apply_slot(state, SlotPlan(1, {0: target}), ch)
        assert state.violations == []

    def test_no_csit_rejects_linear_outputs(self):
        """Test that without delayed CSIT only the opaque token can be forwarded."""
        state, syms = two_user_state(ICOF)
        ch = generate_channel(2, 2, 2, seed=2)
        send_both(state, syms, ch)
        state.grant_tx(0, state.received_eqs[0][0])
        assert not tx_can_form(state, 0, state.received_eqs[0][0])
        assert tx_can_form(state, 0, state.feedback[0][0])


class TestTraceTokens:
    """Test how forwarded tokens appear in traces."""

    def test_token_kind_and_expansion(self):
        """Test that forwarded tokens are tagged and expanded in the trace."""
        state, syms = two_user_state(ICOF)
        ch = generate_channel(2, 2, 2, seed=2)
        send_both(state, syms, ch)
        token_view = state.feedback[0][0]
        (token,) = token_view.support()
        apply_slot(state, SlotPlan(1, {0: token_view}), ch)
        first, second = (json.loads(line) for line in trace_lines(state, ch))
        assert "expanded" not in first
        assert set(first["transmissions"]["0"]) == {f"u{syms[0].index}"}
        assert set(second["transmissions"]["0"]) == {f"y{token.index}"}
        assert set(second["expanded"]["0"]) == {f"u{s.index}" for s in syms}

    def test_stored_plan_is_a_copy(self):
        """Test that apply_slot keeps its own record of the plan."""
        state, syms = two_user_state(ICFD)
        ch = generate_channel(2, 2, 1, seed=1, fullduplex=True)
        plan = SlotPlan(0, {0: LinearExpr.unit(syms[0], PRIME_FIELD)})
        apply_slot(state, plan, ch)
        assert plan.expanded == {}
        assert state.slots[0].expanded[0] == plan.transmissions[0]
