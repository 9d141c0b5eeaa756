"""
Tests for the measure DSL: genomes, operator tables, decoding, guarded
evaluation and analytic gradients.
"""

import pytest
import sys
from pathlib import Path

import numpy as np
import sympy as sp
from scipy.special import erf, expit

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from binsim.core.bitpack import BitVector, QuadCounts, match_counts, xnor_dot
from binsim.core.measure import (
    BASELINE_GENOME,
    BINARY_OPERATORS,
    EPS,
    SATURATION,
    TAN_LIMIT,
    UNARY_OPERATORS,
    AlphaParams,
    EvalStats,
    Genome,
    GenomeParseError,
    InvalidGenomeError,
    decode,
    eval_measure,
    gene_domain,
    grad_measure,
    parse_genome,
    random_genome,
    search_space_size,
    serialize_genome,
)
from binsim.registry import builtin


def _finite_difference(expr, counts, alphas=None, h=1e-6):
    base = list(counts)
    grads = []
    for i in range(4):
        up, down = list(base), list(base)
        up[i] += h
        down[i] -= h
        grads.append((eval_measure(expr, up, alphas) - eval_measure(expr, down, alphas)) / (2 * h))
    return grads


class TestGenome:
    """Validation, parsing and canonical text."""

    def test_search_space_size(self):
        assert len(UNARY_OPERATORS) == 18
        assert len(BINARY_OPERATORS) == 14
        assert search_space_size() == 288_054_144

    def test_gene_domains(self):
        assert [gene_domain(i) for i in range(7)] == [18, 18, 18, 18, 14, 14, 14]
        with pytest.raises(IndexError):
            gene_domain(7)

    def test_out_of_range_gene(self):
        with pytest.raises(InvalidGenomeError):
            Genome(18, 0, 0, 0, 0, 0, 0)
        with pytest.raises(InvalidGenomeError):
            Genome(0, 0, 0, 0, 14, 0, 0)

    def test_wrong_arity(self):
        with pytest.raises(InvalidGenomeError):
            Genome.from_genes([0, 0, 0])

    def test_parse_compact_and_comma_forms(self):
        assert parse_genome("0000001") == BASELINE_GENOME
        assert parse_genome("3, 0, 3, 0, 0, 1, 6") == Genome(3, 0, 3, 0, 0, 1, 6)
        assert parse_genome("17,0,0,0,13,0,0").genes == (17, 0, 0, 0, 13, 0, 0)

    def test_parse_error_reports_position(self):
        with pytest.raises(GenomeParseError) as exc:
            parse_genome("0,0,0,0,14,0,0")
        assert exc.value.position == 4
        with pytest.raises(GenomeParseError) as exc:
            parse_genome("0,0,x,0,0,0,0")
        assert exc.value.position == 2

    def test_parse_rejects_wrong_length(self):
        with pytest.raises(GenomeParseError):
            parse_genome("000000")
        with pytest.raises(GenomeParseError):
            parse_genome("0,0,0,0,0,0,0,0")

    def test_serialize(self):
        genome = Genome(3, 14, 0, 11, 0, 1, 6)
        assert serialize_genome(genome) == "3,14,0,11,0,1,6"
        assert str(genome) == "3,14,0,11,0,1,6"
        assert serialize_genome(BASELINE_GENOME, compact=True) == "0000001"
        with pytest.raises(InvalidGenomeError):
            serialize_genome(genome, compact=True)

    def test_random_genome_is_valid_and_seeded(self):
        a = [random_genome(np.random.default_rng(3)) for _ in range(2)]
        assert a[0] == a[1]
        for genome in a:
            assert all(0 <= g < gene_domain(i) for i, g in enumerate(genome))


class TestDecode:
    """Formula text and evaluation of decoded genomes."""

    def test_baseline_formula(self):
        assert decode(parse_genome("0000001")).formula() == "(a + d) - (b + c)"

    def test_baseline_equals_xnor_dot(self):
        rng = np.random.default_rng(2)
        expr = decode(BASELINE_GENOME)
        for n in (1, 17, 64, 129):
            x = BitVector.from_bits(rng.integers(0, 2, n))
            y = BitVector.from_bits(rng.integers(0, 2, n))
            assert eval_measure(expr, match_counts(x, y)) == xnor_dot(x, y)

    def test_identity_pass_through(self):
        expr = decode((0, 1, 1, 1, 0, 0, 0))
        assert eval_measure(expr, (5, 2, 3, 7)) == 5.0

    def test_constant_zero_measure(self):
        expr = decode((1, 1, 1, 1, 0, 0, 0))
        for counts in [(0, 0, 0, 0), (3, 1, 4, 1), (100, 0, 0, 28)]:
            assert eval_measure(expr, counts) == 0.0

    def test_slot_names(self):
        names = decode(Genome(3, 0, 3, 0, 0, 1, 6)).slot_names()
        assert names[0] == ("U1(a)", "x^3")
        assert names[1] == ("U2(d)", "x")
        assert names[-1] == ("B3", "y/x")

    def test_alpha_slots_and_formula(self):
        expr = decode(Genome(3, 15, 3, 0, 0, 0, 4))
        assert expr.alpha_slots == (1,)
        assert "alpha2" in expr.formula()

    def test_missing_alpha_raises(self):
        with pytest.raises(ValueError):
            eval_measure(decode(Genome(15, 0, 0, 0, 0, 0, 1)), (1, 1, 1, 1))

    def test_to_sympy_matches_numeric(self):
        expr = decode(Genome(3, 0, 3, 0, 0, 1, 6))
        a, b, c, d = sp.symbols("a b c d", nonnegative=True)
        value = expr.to_sympy().subs({a: 2, b: 3, c: 1, d: 4})
        assert float(value) == pytest.approx(eval_measure(expr, (2, 3, 1, 4)))

    def test_vectorized_evaluation_broadcasts_alpha(self):
        expr = decode(Genome(16, 0, 0, 0, 0, 0, 1))
        alphas = AlphaParams({0: np.array([1.0, 2.0, 3.0])})
        a = np.full((2, 3), 2.0)
        zeros = np.zeros((2, 3))
        y, _ = expr.forward(a, zeros, zeros, zeros, alphas)
        assert np.allclose(y, [[2.0, 4.0, 6.0], [2.0, 4.0, 6.0]])


class TestBuiltins:
    """Built-in measures agree with their closed forms."""

    CLOSED_FORMS = {
        "M1": lambda a, b, c, d: (b ** 3 - c) / (a ** 3 + d),
        "M2": lambda a, b, c, d: (b ** 3 + expit(c)) / (a ** 3 + d),
        "M3": lambda a, b, c, d: (b ** 3 + c) / (a ** 3 + d),
        "M4": lambda a, b, c, d: (b ** 3 - np.sin(c)) / (a ** 3 + d),
        "M6": lambda a, b, c, d: (b ** 3 * expit(c)) / (a ** 3 + d),
        "M8": lambda a, b, c, d: (b ** 3 + np.exp(-c)) / (a ** 3 + d),
        "M10": lambda a, b, c, d: (b ** 3 + expit(c)) / (a ** 3 + d ** 2),
    }

    @pytest.mark.parametrize("name", sorted(CLOSED_FORMS))
    def test_closed_forms(self, name):
        expr = builtin(name)
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b, c, d = (float(v) for v in rng.integers(1, 40, size=4))
            expected = self.CLOSED_FORMS[name](a, b, c, d)
            assert eval_measure(expr, (a, b, c, d)) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_m1_formula_and_zero(self):
        expr = builtin("M1")
        assert expr.formula() == "(b^3 - c) / (a^3 + d)"
        assert eval_measure(expr, (2, 1, 1, 1)) == 0.0

    def test_m5_and_m9_closed_forms(self):
        m5 = builtin("M5")
        m9 = builtin("M9")
        a, b, c, d = 3.0, 2.0, 5.0, 4.0
        assert eval_measure(m5, (a, b, c, d)) == pytest.approx(
            (b - erf(c)) / (a ** 3 + np.exp(-d * d)), rel=1e-12
        )
        assert eval_measure(m9, (a, b, c, d)) == pytest.approx(
            (b ** 3 / np.arctan(c)) / (a ** 3 + d ** 2), rel=1e-12
        )

    def test_m7_division_guard(self):
        expr = builtin("M7")
        alphas = AlphaParams.init(expr, channels=1, value=2.0)
        stats = EvalStats()
        value = eval_measure(expr, QuadCounts(1, 0, 0, 0), alphas, stats=stats)
        assert np.isfinite(value)
        assert value == pytest.approx((1.0 + 2.0) / EPS)
        assert stats.division_guards == 1


class TestGuards:
    """Evaluation never produces NaN or infinity."""

    def test_log_of_zero(self):
        stats = EvalStats()
        expr = decode(Genome(5, 1, 1, 1, 0, 0, 0))
        assert eval_measure(expr, (0, 0, 0, 0), stats=stats) == pytest.approx(np.log(EPS))
        assert stats.log_guards == 1

    def test_sqrt_of_negative(self):
        stats = EvalStats()
        expr = decode(Genome(4, 1, 1, 1, 0, 0, 0))
        y, _ = expr.forward(np.array([-4.0]), 0.0, 0.0, 0.0, stats=stats)
        assert y[0] == 0.0
        assert stats.sqrt_guards == 1

    def test_tan_is_clamped(self):
        stats = EvalStats()
        expr = decode(Genome(9, 1, 1, 1, 0, 0, 0))
        value = eval_measure(expr, (np.pi / 2, 0, 0, 0), stats=stats)
        assert abs(value) <= TAN_LIMIT

    def test_overflow_saturates(self):
        stats = EvalStats()
        expr = decode(Genome(3, 1, 1, 1, 0, 0, 0))
        y, _ = expr.forward(np.array([1e200]), 0.0, 0.0, 0.0, stats=stats)
        assert np.all(np.isfinite(y))
        assert abs(y[0]) == SATURATION
        assert stats.nonfinite > 0

    def test_random_genomes_are_total(self):
        rng = np.random.default_rng(42)
        counts = rng.integers(0, 64, size=(50, 4)).astype(np.float64)
        for _ in range(200):
            expr = decode(random_genome(rng))
            alphas = AlphaParams({slot: np.ones(1) for slot in expr.alpha_slots})
            y, _ = expr.forward(counts[:, 0:1], counts[:, 1:2], counts[:, 2:3], counts[:, 3:4], alphas)
            assert np.all(np.isfinite(y)), expr.formula()

    def test_stats_merge(self):
        one = EvalStats(division_guards=1, log_guards=2)
        other = EvalStats(tan_clamps=3)
        one.merge(other)
        assert one.total == 6


class TestGradients:
    """Analytic partials agree with central differences."""

    @pytest.mark.parametrize("name", ["baseline", "M1", "M3", "M5", "M9", "M10"])
    def test_builtin_gradients(self, name):
        expr = builtin(name)
        counts = (5.0, 3.0, 2.0, 6.0)
        g = grad_measure(expr, counts)
        fd = _finite_difference(expr, counts)
        assert [g.a, g.b, g.c, g.d] == pytest.approx(fd, rel=1e-4, abs=1e-4)

    def test_baseline_gradient_is_constant(self):
        g = grad_measure(decode(BASELINE_GENOME), (3, 1, 4, 1))
        assert (g.a, g.b, g.c, g.d) == (1.0, -1.0, -1.0, 1.0)

    def test_alpha_gradient(self):
        expr = builtin("M7")
        alphas = AlphaParams.init(expr, channels=1, value=1.5)
        counts = (2.0, 3.0, 1.0, 4.0)
        g = grad_measure(expr, counts, alphas)
        h = 1e-6
        up = AlphaParams({1: np.array([1.5 + h])})
        down = AlphaParams({1: np.array([1.5 - h])})
        fd = (eval_measure(expr, counts, up) - eval_measure(expr, counts, down)) / (2 * h)
        assert g.alpha[1] == pytest.approx(fd, rel=1e-4)

    def test_random_genome_gradients(self):
        rng = np.random.default_rng(8)
        checked = 0
        while checked < 30:
            expr = decode(random_genome(rng))
            counts = tuple(float(v) for v in rng.uniform(0.5, 3.0, size=4))
            alphas = AlphaParams({slot: np.array([0.7]) for slot in expr.alpha_slots})
            value = eval_measure(expr, counts, alphas)
            if abs(value) > 1e4:
                continue
            stats = EvalStats()
            for offset in (-1e-6, 1e-6):
                shifted = [c + offset for c in counts]
                eval_measure(expr, shifted, alphas, stats=stats)
            # skip points next to a guard or a max/min kink
            if stats.total or any(op.name in ("max", "min") for op in expr.binary):
                continue
            g = grad_measure(expr, counts, alphas)
            fd = _finite_difference(expr, counts, alphas)
            assert [g.a, g.b, g.c, g.d] == pytest.approx(fd, rel=1e-4, abs=1e-4), expr.formula()
            checked += 1


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
