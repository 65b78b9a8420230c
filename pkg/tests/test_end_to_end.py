"""
Test End to End

Integration tests running complete schemes over random channels and comparing
the empirical DoF with the closed forms.
"""

import pytest

from retroalign import simulate
from retroalign.dof_analysis import ICFD, XFD, ModelId, dof_of
from retroalign.schemes import build_policy, execute_policy


SMALL_CASES = [
    ("icfd", 3, None),
    ("icfd", 4, None),
    ("icof", 3, None),
    ("icof", 4, None),
    ("icsf", 3, None),
    ("icsf", 4, None),
    ("xof", 2, None),
    ("xof", 3, None),
    ("xof", 4, None),
    ("xsf", 2, None),
    ("xsf", 3, None),
    ("xfd", 2, 2),
    ("xfd", 3, 3),
]


@pytest.mark.integration
class TestSmallSchemes:
    """Run every scripted scheme at its small sizes."""

    @pytest.mark.parametrize("model,K,M", SMALL_CASES)
    @pytest.mark.parametrize("seed", [1, 2])
    def test_matches_analytic(self, model, K, M, seed):
        """Test decodability at every receiver and the exact DoF."""
        report = simulate(model, K, M, seed=seed)
        assert report.ok, report.feasibility_violations or report.per_rx_decodable
        assert report.empirical_dof == dof_of(ModelId.from_name(model), K, M)
        assert report.matches_analytic

    @pytest.mark.parametrize("model,K,M", [("icfd", 3, None), ("xof", 3, None), ("icsf", 3, None)])
    def test_complex_field(self, model, K, M):
        """Test the floating-point field on the smallest schemes."""
        report = simulate(model, K, M, seed=5, field="complex")
        assert report.ok
        assert report.matches_analytic

    def test_no_pending_symbols(self):
        """Test that every produced symbol is consumed by a later phase."""
        _, ctx = execute_policy(build_policy(ICFD, 4), seed=3)
        assert ctx.pending() == 0

    def test_xfd_two_by_two_trace(self):
        """Test that the 2x2 full-duplex scheme uses three slots."""
        report, ctx = execute_policy(build_policy(XFD, 2, 2), seed=1)
        assert report.slots_used == 3
        assert report.symbols_injected == 4
        assert len(ctx.groups) == 0

    def test_seeds_are_reproducible(self):
        """Test that equal seeds give identical receptions."""
        _, first = execute_policy(build_policy(ICFD, 3), seed=8)
        _, second = execute_policy(build_policy(ICFD, 3), seed=8)
        assert first.state.received_eqs == second.state.received_eqs

    def test_lenient_mode_records_nothing(self):
        """Test that a feasible scheme records no violations when not strict."""
        report = simulate("xsf", 3, seed=3, strict=False)
        assert report.feasibility_violations == []
        assert report.ok


@pytest.mark.integration
@pytest.mark.slow
class TestFiveUsers:
    """Full five-user cascades."""

    @pytest.mark.parametrize("model", ["icfd", "icof", "icsf", "xsf", "xof"])
    def test_five_users(self, model):
        """Test one seed of each five-user scheme."""
        report = simulate(model, 5, seed=1)
        assert report.ok
        assert report.matches_analytic


# model, K, M, slots per run where the worked totals state them
ACCEPTANCE_CASES = [
    ("icfd", 3, None, 5),
    ("icfd", 4, None, 19),
    ("icfd", 5, None, None),
    ("icof", 3, None, None),
    ("icof", 4, None, None),
    ("icof", 5, None, None),
    ("icsf", 3, None, None),
    ("icsf", 4, None, None),
    ("xof", 2, None, None),
    ("xof", 3, None, 6),
    ("xof", 4, None, None),
    ("xof", 5, None, None),
    ("xof", 6, None, None),
    ("xfd", 2, 2, 3),
    ("xfd", 3, 3, 51),
    ("xsf", 2, None, None),
    ("xsf", 3, None, 17),
]


@pytest.mark.integration
@pytest.mark.slow
class TestHundredSeeds:
    """Every acceptance scheme over seeds 1..100."""

    @pytest.mark.parametrize("model,K,M,slots", ACCEPTANCE_CASES)
    def test_all_seeds(self, model, K, M, slots):
        """Test exact DoF, decodability and feasibility for each seed."""
        model_id = ModelId.from_name(model)
        policy = build_policy(model_id, K, M)
        if slots is not None:
            assert policy.total_slots() == slots
        expected = dof_of(model_id, K, M)
        for seed in range(1, 101):
            report, _ = execute_policy(policy, seed=seed)
            assert report.ok, (seed, report.per_rx_decodable)
            assert report.feasibility_violations == []
            assert report.slots_used == policy.total_slots()
            assert report.symbols_injected == policy.total_symbols()
            assert report.empirical_dof == expected, seed
