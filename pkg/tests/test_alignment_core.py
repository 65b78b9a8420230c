"""
Test Alignment Core

Unit tests for symbols, linear expressions, spans and decodability in both field modes.
"""

import pickle

import numpy as np
import pytest

from retroalign.alignment_core import (
    COMPLEX_FIELD,
    PRIME,
    PRIME_FIELD,
    EchelonBasis,
    LinearExpr,
    SymbolPool,
    SymbolSpec,
    channel_gain,
    decodable,
    eliminate,
    gain_slot,
    generic_rank,
    get_field,
    random_coeffs,
    spawn_streams,
)


@pytest.fixture
def symbols():
    """Three fresh symbols owned by TX0 for RX0."""
    return SymbolPool().mint_fresh(3, owner_tx=0, intended_rx=0)


class TestSymbolPool:
    """Test symbol issuing."""

    def test_unique_indices(self):
        """Test that every minted symbol is distinct."""
        pool = SymbolPool()
        fresh = pool.mint_fresh(4, owner_tx=1, intended_rx=2)
        token = pool.mint(1, 0, "feedback")
        assert len({s.index for s in fresh + [token]}) == 5
        assert pool.issued["fresh"] == 4
        assert pool.issued["feedback"] == 1
        assert len(pool) == 5

    def test_mint_fresh_bounds(self):
        """Test zero and negative counts."""
        pool = SymbolPool()
        assert pool.mint_fresh(0, 0, 0) == []
        with pytest.raises(ValueError):
            pool.mint_fresh(-1, 0, 0)

    def test_repr_marks_kind(self):
        """Test that the kind appears in the printed form."""
        pool = SymbolPool()
        assert repr(pool.mint(0, 1)).startswith("u")
        assert repr(pool.mint(0, 1, "feedback")).startswith("y")


class TestFields:
    """Test field backends and coefficient draws."""

    def test_prime_inverse(self):
        """Test modular inverse and zero handling."""
        assert PRIME_FIELD.mul(12345, PRIME_FIELD.inv(12345)) == 1
        assert PRIME_FIELD.is_zero(PRIME)
        with pytest.raises(ZeroDivisionError):
            PRIME_FIELD.inv(0)

    def test_get_field(self):
        """Test mode lookup."""
        assert get_field("prime") is PRIME_FIELD
        assert get_field("complex") is COMPLEX_FIELD
        with pytest.raises(ValueError):
            get_field("real")

    def test_random_coeffs_deterministic(self):
        """Test that equal seeds give equal nonzero draws."""
        first = random_coeffs(5, np.random.default_rng(7))
        second = random_coeffs(5, np.random.default_rng(7))
        assert first == second
        assert all(0 < c < PRIME for c in first)
        assert random_coeffs(0, np.random.default_rng(7)) == []

    def test_spawned_streams_differ(self):
        """Test that spawned streams are independent but reproducible."""
        a, b = spawn_streams(3)
        assert a.integers(0, 1 << 30) != b.integers(0, 1 << 30)
        again = spawn_streams(3)[0]
        assert again.integers(0, 1 << 30) == spawn_streams(3)[0].integers(0, 1 << 30)


class TestLinearExpr:
    """Test linear form arithmetic."""

    def test_combination_prunes_zero(self, symbols):
        """Test that cancelling terms vanish."""
        a, b, _ = symbols
        x = LinearExpr({a: 2, b: 3}, PRIME_FIELD)
        y = LinearExpr({a: 2}, PRIME_FIELD)
        diff = x - y
        assert diff.support() == frozenset({b})
        assert (x - x).is_zero()
        assert diff.coefficient(a) == 0

    def test_combination_length_mismatch(self, symbols):
        """Test that mismatched coefficient lists are rejected."""
        unit = LinearExpr.unit(symbols[0], PRIME_FIELD)
        with pytest.raises(ValueError):
            LinearExpr.combination([unit], [1, 2], PRIME_FIELD)

    def test_immutable(self, symbols):
        """Test that attributes cannot be reassigned."""
        expr = LinearExpr.unit(symbols[0], PRIME_FIELD)
        with pytest.raises(AttributeError):
            expr.terms = {}

    def test_substitute(self, symbols):
        """Test replacing a token by its expansion."""
        a, b, c = symbols
        expr = LinearExpr({a: 1, c: 5}, PRIME_FIELD)
        expanded = expr.substitute({c: LinearExpr({a: 1, b: 2}, PRIME_FIELD)})
        assert expanded == LinearExpr({a: 6, b: 10}, PRIME_FIELD)
        assert expr.substitute({}) is expr

    def test_scale_and_add(self, symbols):
        """Test scaling and addition."""
        a, b, _ = symbols
        x = LinearExpr.unit(a, PRIME_FIELD).scale(4) + LinearExpr.unit(b, PRIME_FIELD)
        assert x.coefficient(a) == 4
        assert len(x) == 2

    def test_channel_slot_propagates(self, symbols):
        """Test that tagged channel coefficients mark every derived expression."""
        a, b, c = symbols
        x, y = LinearExpr.unit(a, PRIME_FIELD), LinearExpr.unit(b, PRIME_FIELD)
        assert x.csi_slot == -1
        mixed = LinearExpr.combination([x, y], [channel_gain(5, 2), 7], PRIME_FIELD)
        assert mixed.csi_slot == 2
        assert mixed.coefficient(a) == 5
        assert (mixed + x).csi_slot == 2
        assert x.scale(channel_gain(3, 4)).csi_slot == 4
        assert x.substitute({a: mixed}).csi_slot == 2
        assert LinearExpr.unit(c, PRIME_FIELD).substitute({a: mixed}).csi_slot == -1
        assert mixed == LinearExpr({a: 5, b: 7}, PRIME_FIELD)

    @pytest.mark.parametrize("value", [12345, 0.5 - 1.5j])
    def test_channel_gain_pickles(self, value):
        """Test that tagged coefficients survive pickling with their slot."""
        gain = channel_gain(value, 3)
        copy = pickle.loads(pickle.dumps(gain))
        assert copy == value
        assert gain_slot(copy) == 3
        assert gain_slot(value) == -1

    def test_trace_keys_carry_kind(self):
        """Test that encoded keys tell fresh symbols from fed-back tokens."""
        pool = SymbolPool()
        (u,) = pool.mint_fresh(1, 0, 0)
        y = pool.mint(0, 0, "feedback")
        encoded = LinearExpr({u: 2, y: 3}, PRIME_FIELD).encode()
        assert encoded == {f"u{u.index}": "2", f"y{y.index}": "3"}


class TestSymbolSpec:
    """Test SymbolSpec validation."""

    def test_order(self, symbols):
        """Test that the order counts desiring receivers."""
        spec = SymbolSpec(LinearExpr.unit(symbols[0], PRIME_FIELD), frozenset({0}),
                          frozenset({1, 2}), frozenset({0}))
        assert spec.order == 2

    def test_validation(self, symbols):
        """Test the holder, desire and overlap checks."""
        expr = LinearExpr.unit(symbols[0], PRIME_FIELD)
        with pytest.raises(ValueError):
            SymbolSpec(expr, frozenset(), frozenset({1}))
        with pytest.raises(ValueError):
            SymbolSpec(expr, frozenset({0}), frozenset())
        with pytest.raises(ValueError):
            SymbolSpec(expr, frozenset({0}), frozenset({1}), frozenset({1}))


class TestEchelonBasis:
    """Test incremental spans."""

    def test_rank_and_membership(self, symbols):
        """Test that dependent rows do not raise the rank."""
        a, b, c = symbols
        x = LinearExpr({a: 1, b: 1}, PRIME_FIELD)
        y = LinearExpr({b: 1, c: 1}, PRIME_FIELD)
        basis = EchelonBasis(PRIME_FIELD, [x, y])
        assert basis.rank == 2
        assert not basis.add(x - y)
        assert basis.contains(x.scale(3) + y)
        assert not basis.contains(LinearExpr.unit(a, PRIME_FIELD))

    def test_copy_is_independent(self, symbols):
        """Test that a copy does not share rows."""
        basis = EchelonBasis(PRIME_FIELD, [LinearExpr.unit(symbols[0], PRIME_FIELD)])
        clone = basis.copy()
        clone.add(LinearExpr.unit(symbols[1], PRIME_FIELD))
        assert basis.rank == 1
        assert clone.rank == 2


class TestRankAndDecoding:
    """Test generic rank, elimination and decodability."""

    def test_galois_rank_matches_echelon(self):
        """Test the dense galois rank against the incremental basis."""
        pool = SymbolPool()
        syms = pool.mint_fresh(5, 0, 0)
        rng = np.random.default_rng(11)
        rows = [LinearExpr(dict(zip(syms, random_coeffs(5, rng))), PRIME_FIELD) for _ in range(4)]
        rows.append(rows[0] + rows[1])
        assert generic_rank(rows, PRIME_FIELD) == EchelonBasis(PRIME_FIELD, rows).rank == 4

    def test_complex_rank(self):
        """Test SVD rank on a rank-deficient system."""
        syms = SymbolPool().mint_fresh(3, 0, 0)
        rng = np.random.default_rng(5)
        rows = [LinearExpr(dict(zip(syms, random_coeffs(3, rng, COMPLEX_FIELD))), COMPLEX_FIELD)
                for _ in range(2)]
        rows.append(rows[0] + rows[1])
        assert generic_rank(rows, COMPLEX_FIELD) == 2
        assert generic_rank([], COMPLEX_FIELD) == 0

    @pytest.mark.parametrize("fld", [PRIME_FIELD, COMPLEX_FIELD])
    def test_two_equations_two_unknowns(self, symbols, fld):
        """Test that a generic 2x2 system decodes and a single equation does not."""
        a, b, _ = symbols
        rng = np.random.default_rng(2)
        eq1 = LinearExpr(dict(zip((a, b), random_coeffs(2, rng, fld))), fld)
        eq2 = LinearExpr(dict(zip((a, b), random_coeffs(2, rng, fld))), fld)
        assert decodable([eq1, eq2], [], [a, b])
        assert not decodable([eq1], [], [a])
        assert decodable([], [], [])

    @pytest.mark.parametrize("fld", [PRIME_FIELD, COMPLEX_FIELD])
    def test_side_information_helps(self, symbols, fld):
        """Test that known interference resolves a single equation."""
        a, b, _ = symbols
        eq = LinearExpr({a: fld.coerce(3), b: fld.coerce(7)}, fld)
        assert decodable([eq], [LinearExpr.unit(b, fld)], [a])

    def test_decodable_monotone(self, symbols):
        """Test that adding equations never loses decodability."""
        a, b, c = symbols
        rows = [LinearExpr({a: 1, b: 2}, PRIME_FIELD), LinearExpr({a: 3, b: 1}, PRIME_FIELD)]
        assert decodable(rows, [], [a])
        assert decodable(rows + [LinearExpr({c: 1, a: 1}, PRIME_FIELD)], [], [a])

    @pytest.mark.parametrize("fld", [PRIME_FIELD, COMPLEX_FIELD])
    def test_eliminate_removes_known(self, symbols, fld):
        """Test that eliminated equations lie outside span(known)."""
        a, b, _ = symbols
        known = [LinearExpr.unit(b, fld)]
        eq = LinearExpr({a: fld.coerce(2), b: fld.coerce(5)}, fld)
        (reduced,) = eliminate(known, [eq])
        assert abs(reduced.coefficient(b)) < 1e-9
        assert abs(reduced.coefficient(a)) > 0.5
        assert eliminate([], [eq]) == [eq]

    @pytest.mark.slow
    def test_genericity(self):
        """Test that random square prime systems are full rank almost always."""
        rng = np.random.default_rng(0)
        failures = 0
        for _ in range(10_000):
            syms = SymbolPool().mint_fresh(4, 0, 0)
            rows = [LinearExpr(dict(zip(syms, random_coeffs(4, rng))), PRIME_FIELD)
                    for _ in range(4)]
            if EchelonBasis(PRIME_FIELD, rows).rank < 4:
                failures += 1
        assert failures == 0

    @pytest.mark.parametrize("fld", [PRIME_FIELD, COMPLEX_FIELD])
    def test_eliminate_idempotent(self, fld):
        """Test that eliminating twice changes nothing."""
        rng = np.random.default_rng(11)
        syms = SymbolPool().mint_fresh(5, 0, 0)
        known = [LinearExpr(dict(zip(syms[:3], random_coeffs(3, rng, fld))), fld) for _ in range(2)]
        eqs = [LinearExpr(dict(zip(syms, random_coeffs(5, rng, fld))), fld) for _ in range(3)]
        once = eliminate(known, eqs)
        twice = eliminate(known, once)
        for first, second in zip(once, twice):
            for s in syms:
                assert abs(first.coefficient(s) - second.coefficient(s)) < 1e-9

    @pytest.mark.slow
    def test_complex_agrees_with_prime(self):
        """Test both fields on shared random support patterns."""
        rng = np.random.default_rng(5)
        disagreements = 0
        for _ in range(1_000):
            n = int(rng.integers(1, 9))
            mask = rng.random((n, n)) < 0.5
            verdicts = []
            for fld in (PRIME_FIELD, COMPLEX_FIELD):
                syms = SymbolPool().mint_fresh(n, 0, 0)
                draws = np.random.default_rng(int(rng.integers(0, 2 ** 31)))
                rows = []
                for r in range(n):
                    coeffs = random_coeffs(n, draws, fld)
                    rows.append(LinearExpr({s: c for k, (s, c) in enumerate(zip(syms, coeffs)) if mask[r, k]}, fld))
                verdicts.append(decodable(rows, [], syms))
            if verdicts[0] != verdicts[1]:
                disagreements += 1
        assert disagreements == 0
