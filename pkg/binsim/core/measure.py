"""
Similarity-measure DSL.

A measure is a fixed operator graph over the four match frequencies:

    a --U1--\\
             B1 --\\
    d --U2--/      \\
                    B3 --> Y
    b --U3--\\      /
             B2 --/
    c --U4--/

encoded as a 7-gene ``Genome`` (U1 U2 U3 U4 B1 B2 B3). Unary genes index
``UNARY_OPERATORS`` (18 entries), binary genes index ``BINARY_OPERATORS``
(14 entries). Evaluation is vectorized over numpy arrays with the output
channel on the last axis; every operator carries its analytic derivative so
the expression can be back-propagated through.

Arithmetic is guarded so evaluation never returns NaN:
- division adds EPS to any denominator with magnitude < EPS
- log(x) is log(max(x, 0) + EPS), sqrt(x) is sqrt(max(x, 0))
- tan is clamped to [-TAN_LIMIT, TAN_LIMIT]
- non-finite intermediates are replaced by +-SATURATION
Guard activations are counted in an ``EvalStats`` record when one is passed.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy as sp
from scipy.special import erf, erfc, expit

logger = logging.getLogger(__name__)

EPS = 1e-6
TAN_LIMIT = 1e6
EXP_LIMIT = 700.0
SATURATION = 1e12

ArrayLike = Union[float, np.ndarray]

GENOME_LENGTH = 7
NUM_UNARY_GENES = 4

# slot i of the graph reads input INPUT_ORDER[i]
INPUT_ORDER = ("a", "d", "b", "c")


class InvalidGenomeError(ValueError):
    """Raised when a genome has the wrong arity or an out-of-range gene."""
    pass


class GenomeParseError(InvalidGenomeError):
    """Raised when genome text cannot be parsed; ``position`` is the 0-based gene index."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at gene {position})")
        self.position = position


@dataclass
class EvalStats:
    """Guard activation counters for diagnostics."""
    division_guards: int = 0
    log_guards: int = 0
    sqrt_guards: int = 0
    tan_clamps: int = 0
    exp_clamps: int = 0
    nonfinite: int = 0

    @property
    def total(self) -> int:
        return (self.division_guards + self.log_guards + self.sqrt_guards
                + self.tan_clamps + self.exp_clamps + self.nonfinite)

    def merge(self, other: "EvalStats"):
        self.division_guards += other.division_guards
        self.log_guards += other.log_guards
        self.sqrt_guards += other.sqrt_guards
        self.tan_clamps += other.tan_clamps
        self.exp_clamps += other.exp_clamps
        self.nonfinite += other.nonfinite


def _count(stats: Optional[EvalStats], attr: str, mask) -> None:
    if stats is not None:
        setattr(stats, attr, getattr(stats, attr) + int(np.count_nonzero(mask)))


def _guard_den(den: np.ndarray, stats: Optional[EvalStats]) -> np.ndarray:
    small = np.abs(den) < EPS
    _count(stats, "division_guards", small)
    return np.where(small, den + EPS, den)


def _sanitize(x: np.ndarray, stats: Optional[EvalStats]) -> np.ndarray:
    bad = ~np.isfinite(x)
    if np.any(bad):
        _count(stats, "nonfinite", bad)
        x = np.nan_to_num(x, nan=0.0, posinf=SATURATION, neginf=-SATURATION)
    return x


# ---------------------------------------------------------------------------
# Unary operators: forward(x, alpha, stats) -> y, derivative(x, alpha) -> (dy/dx, dy/dalpha)
# ---------------------------------------------------------------------------

def _sqrt(x, alpha, stats):
    _count(stats, "sqrt_guards", x < 0)
    return np.sqrt(np.maximum(x, 0.0))


def _d_sqrt(x, alpha):
    return np.where(x > 0, 0.5 / np.sqrt(np.maximum(x, EPS)), 0.0), 0.0


def _log(x, alpha, stats):
    _count(stats, "log_guards", x < EPS)
    return np.log(np.maximum(x, 0.0) + EPS)


def _d_log(x, alpha):
    return np.where(x >= 0, 1.0 / (np.maximum(x, 0.0) + EPS), 0.0), 0.0


def _tan(x, alpha, stats):
    t = np.tan(x)
    clamped = np.abs(t) > TAN_LIMIT
    _count(stats, "tan_clamps", clamped)
    return np.clip(t, -TAN_LIMIT, TAN_LIMIT)


def _d_tan(x, alpha):
    t = np.tan(x)
    return np.where(np.abs(t) > TAN_LIMIT, 0.0, 1.0 + t * t), 0.0


def _exp_neg(x, alpha, stats):
    _count(stats, "exp_clamps", x < -EXP_LIMIT)
    return np.exp(-np.maximum(x, -EXP_LIMIT))


def _d_exp_neg(x, alpha):
    return np.where(x < -EXP_LIMIT, 0.0, -np.exp(-np.maximum(x, -EXP_LIMIT))), 0.0


def _d_sigmoid(x, alpha):
    s = expit(x)
    return s * (1.0 - s), 0.0


_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


@dataclass(frozen=True)
class UnaryOperator:
    name: str
    template: str
    forward: Callable
    derivative: Callable
    symbolic: Callable
    uses_alpha: bool = False


@dataclass(frozen=True)
class BinaryOperator:
    name: str
    template: str
    forward: Callable
    derivative: Callable
    symbolic: Callable


UNARY_OPERATORS: List[UnaryOperator] = [
    UnaryOperator("x", "{x}",
                  lambda x, al, st: x,
                  lambda x, al: (np.ones_like(x), 0.0),
                  lambda x, al: x),
    UnaryOperator("0", "0",
                  lambda x, al, st: np.zeros_like(x),
                  lambda x, al: (np.zeros_like(x), 0.0),
                  lambda x, al: sp.Integer(0)),
    UnaryOperator("x^2", "{x}^2",
                  lambda x, al, st: x * x,
                  lambda x, al: (2.0 * x, 0.0),
                  lambda x, al: x ** 2),
    UnaryOperator("x^3", "{x}^3",
                  lambda x, al, st: x * x * x,
                  lambda x, al: (3.0 * x * x, 0.0),
                  lambda x, al: x ** 3),
    UnaryOperator("sqrt", "sqrt({x})", _sqrt, _d_sqrt, lambda x, al: sp.sqrt(x)),
    UnaryOperator("log", "log({x})", _log, _d_log, lambda x, al: sp.log(x)),
    UnaryOperator("sin", "sin({x})",
                  lambda x, al, st: np.sin(x),
                  lambda x, al: (np.cos(x), 0.0),
                  lambda x, al: sp.sin(x)),
    UnaryOperator("cos", "cos({x})",
                  lambda x, al, st: np.cos(x),
                  lambda x, al: (-np.sin(x), 0.0),
                  lambda x, al: sp.cos(x)),
    UnaryOperator("sigmoid", "sigmoid({x})",
                  lambda x, al, st: expit(x),
                  _d_sigmoid,
                  lambda x, al: 1 / (1 + sp.exp(-x))),
    UnaryOperator("tan", "tan({x})", _tan, _d_tan, lambda x, al: sp.tan(x)),
    UnaryOperator("atan", "atan({x})",
                  lambda x, al, st: np.arctan(x),
                  lambda x, al: (1.0 / (1.0 + x * x), 0.0),
                  lambda x, al: sp.atan(x)),
    UnaryOperator("erf", "erf({x})",
                  lambda x, al, st: erf(x),
                  lambda x, al: (_TWO_OVER_SQRT_PI * np.exp(-x * x), 0.0),
                  lambda x, al: sp.erf(x)),
    UnaryOperator("erfc", "erfc({x})",
                  lambda x, al, st: erfc(x),
                  lambda x, al: (-_TWO_OVER_SQRT_PI * np.exp(-x * x), 0.0),
                  lambda x, al: sp.erfc(x)),
    UnaryOperator("exp(-x)", "exp(-{x})", _exp_neg, _d_exp_neg, lambda x, al: sp.exp(-x)),
    UnaryOperator("exp(-x^2)", "exp(-{x}^2)",
                  lambda x, al, st: np.exp(-x * x),
                  lambda x, al: (-2.0 * x * np.exp(-x * x), 0.0),
                  lambda x, al: sp.exp(-x ** 2)),
    UnaryOperator("alpha", "{alpha}",
                  lambda x, al, st: np.zeros_like(x) + al,
                  lambda x, al: (np.zeros_like(x), np.ones_like(x)),
                  lambda x, al: al,
                  uses_alpha=True),
    UnaryOperator("alpha*x", "{alpha}*{x}",
                  lambda x, al, st: al * x,
                  lambda x, al: (np.zeros_like(x) + al, x),
                  lambda x, al: al * x,
                  uses_alpha=True),
    UnaryOperator("alpha+x", "({alpha} + {x})",
                  lambda x, al, st: al + x,
                  lambda x, al: (np.ones_like(x), np.ones_like(x)),
                  lambda x, al: al + x,
                  uses_alpha=True),
]


# ---------------------------------------------------------------------------
# Binary operators: forward(x, y, stats) -> z, derivative(x, y) -> (dz/dx, dz/dy)
# The derivative sees the same guarded denominators as the forward pass.
# ---------------------------------------------------------------------------

def _div(x, y, stats):
    return x / _guard_den(y, stats)


def _d_div(x, y):
    den = _guard_den(y, None)
    return 1.0 / den, -x / (den * den)


def _share_x(x, y, stats):
    return x / _guard_den(x + y, stats)


def _d_share_x(x, y):
    den = _guard_den(x + y, None)
    return 1.0 / den - x / (den * den), -x / (den * den)


def _rdiv(x, y, stats):
    return y / _guard_den(x, stats)


def _d_rdiv(x, y):
    den = _guard_den(x, None)
    return -y / (den * den), 1.0 / den


def _share_y(x, y, stats):
    return y / _guard_den(x + y, stats)


def _d_share_y(x, y):
    den = _guard_den(x + y, None)
    return -y / (den * den), 1.0 / den - y / (den * den)


def _d_max(x, y):
    first = x >= y
    return first.astype(np.float64), (~first).astype(np.float64)


def _d_min(x, y):
    first = x <= y
    return first.astype(np.float64), (~first).astype(np.float64)


def _d_x_sig_y(x, y):
    s = expit(y)
    return s, x * s * (1.0 - s)


def _d_y_sig_x(x, y):
    s = expit(x)
    return y * s * (1.0 - s), s


def _d_exp_abs(x, y):
    e = np.exp(-np.abs(x - y))
    sgn = np.sign(x - y)
    return -sgn * e, sgn * e


def _d_exp_sq(x, y):
    diff = x - y
    e = np.exp(-diff * diff)
    return -2.0 * diff * e, 2.0 * diff * e


BINARY_OPERATORS: List[BinaryOperator] = [
    BinaryOperator("x+y", "({x} + {y})",
                   lambda x, y, st: x + y,
                   lambda x, y: (np.ones_like(x), np.ones_like(y)),
                   lambda x, y: x + y),
    BinaryOperator("x-y", "({x} - {y})",
                   lambda x, y, st: x - y,
                   lambda x, y: (np.ones_like(x), -np.ones_like(y)),
                   lambda x, y: x - y),
    BinaryOperator("y-x", "({y} - {x})",
                   lambda x, y, st: y - x,
                   lambda x, y: (-np.ones_like(x), np.ones_like(y)),
                   lambda x, y: y - x),
    BinaryOperator("x*y", "({x} * {y})",
                   lambda x, y, st: x * y,
                   lambda x, y: (y + np.zeros_like(x), x + np.zeros_like(y)),
                   lambda x, y: x * y),
    BinaryOperator("x/y", "({x} / {y})", _div, _d_div, lambda x, y: x / y),
    BinaryOperator("x/(x+y)", "({x} / ({x} + {y}))", _share_x, _d_share_x, lambda x, y: x / (x + y)),
    BinaryOperator("y/x", "({y} / {x})", _rdiv, _d_rdiv, lambda x, y: y / x),
    BinaryOperator("y/(x+y)", "({y} / ({x} + {y}))", _share_y, _d_share_y, lambda x, y: y / (x + y)),
    BinaryOperator("max", "max({x}, {y})",
                   lambda x, y, st: np.maximum(x, y), _d_max, lambda x, y: sp.Max(x, y)),
    BinaryOperator("min", "min({x}, {y})",
                   lambda x, y, st: np.minimum(x, y), _d_min, lambda x, y: sp.Min(x, y)),
    BinaryOperator("x*sigmoid(y)", "({x} * sigmoid({y}))",
                   lambda x, y, st: x * expit(y), _d_x_sig_y, lambda x, y: x / (1 + sp.exp(-y))),
    BinaryOperator("y*sigmoid(x)", "({y} * sigmoid({x}))",
                   lambda x, y, st: y * expit(x), _d_y_sig_x, lambda x, y: y / (1 + sp.exp(-x))),
    BinaryOperator("exp(-|x-y|)", "exp(-|{x} - {y}|)",
                   lambda x, y, st: np.exp(-np.abs(x - y)), _d_exp_abs,
                   lambda x, y: sp.exp(-sp.Abs(x - y))),
    BinaryOperator("exp(-(x-y)^2)", "exp(-({x} - {y})^2)",
                   lambda x, y, st: np.exp(-(x - y) ** 2), _d_exp_sq,
                   lambda x, y: sp.exp(-(x - y) ** 2)),
]

NUM_UNARY = len(UNARY_OPERATORS)
NUM_BINARY = len(BINARY_OPERATORS)


def search_space_size() -> int:
    """Number of distinct genomes the operator tables allow."""
    return NUM_UNARY ** NUM_UNARY_GENES * NUM_BINARY ** (GENOME_LENGTH - NUM_UNARY_GENES)


# ---------------------------------------------------------------------------
# Genome
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Genome:
    """Operator choices U1 U2 U3 U4 B1 B2 B3 of the fixed measure graph."""
    u1: int
    u2: int
    u3: int
    u4: int
    b1: int
    b2: int
    b3: int

    def __post_init__(self):
        for position, gene in enumerate(self.genes):
            limit = NUM_UNARY if position < NUM_UNARY_GENES else NUM_BINARY
            if isinstance(gene, bool) or not isinstance(gene, (int, np.integer)):
                raise InvalidGenomeError(f"gene {position} must be an integer, got {gene!r}")
            if not 0 <= int(gene) < limit:
                raise InvalidGenomeError(f"gene {position} = {gene} is outside [0, {limit})")
            object.__setattr__(self, self._fields()[position], int(gene))

    @staticmethod
    def _fields() -> Tuple[str, ...]:
        return ("u1", "u2", "u3", "u4", "b1", "b2", "b3")

    @classmethod
    def from_genes(cls, genes: Sequence[int]) -> "Genome":
        genes = tuple(genes)
        if len(genes) != GENOME_LENGTH:
            raise InvalidGenomeError(f"a genome has {GENOME_LENGTH} genes, got {len(genes)}")
        return cls(*genes)

    @property
    def genes(self) -> Tuple[int, ...]:
        return (self.u1, self.u2, self.u3, self.u4, self.b1, self.b2, self.b3)

    def __iter__(self):
        return iter(self.genes)

    def __getitem__(self, index):
        return self.genes[index]

    def __len__(self) -> int:
        return GENOME_LENGTH

    def __str__(self) -> str:
        return serialize_genome(self)


def gene_domain(position: int) -> int:
    """Number of admissible values at a gene position."""
    if not 0 <= position < GENOME_LENGTH:
        raise IndexError(f"gene position {position} outside [0, {GENOME_LENGTH})")
    return NUM_UNARY if position < NUM_UNARY_GENES else NUM_BINARY


def parse_genome(text: str) -> Genome:
    """Parse "u1,u2,u3,u4,b1,b2,b3" or the compact 7-digit form (genes <= 9 only)."""
    raw = text.strip()
    if "," in raw:
        parts = [p.strip() for p in raw.split(",")]
    elif re.fullmatch(r"\d+", raw or "x"):
        parts = list(raw)
    else:
        raise GenomeParseError(f"malformed genome text {text!r}", 0)
    for position, part in enumerate(parts):
        if position >= GENOME_LENGTH:
            raise GenomeParseError(f"expected {GENOME_LENGTH} genes, got {len(parts)}", position)
        if not re.fullmatch(r"\d+", part):
            raise GenomeParseError(f"gene {part!r} is not a decimal integer", position)
        limit = gene_domain(position)
        if int(part) >= limit:
            raise GenomeParseError(f"gene {part} is outside [0, {limit})", position)
    if len(parts) != GENOME_LENGTH:
        raise GenomeParseError(f"expected {GENOME_LENGTH} genes, got {len(parts)}", len(parts))
    return Genome.from_genes(int(p) for p in parts)


def serialize_genome(genome: Genome, compact: bool = False) -> str:
    """Canonical comma form; ``compact`` gives the 7-digit form when every gene <= 9."""
    if compact:
        if any(g > 9 for g in genome.genes):
            raise InvalidGenomeError(f"genome {genome.genes} has a gene > 9; no compact form")
        return "".join(str(g) for g in genome.genes)
    return ",".join(str(g) for g in genome.genes)


def random_genome(rng: np.random.Generator) -> Genome:
    """Uniform draw over the whole genome space."""
    unary = rng.integers(0, NUM_UNARY, size=NUM_UNARY_GENES)
    binary = rng.integers(0, NUM_BINARY, size=GENOME_LENGTH - NUM_UNARY_GENES)
    return Genome.from_genes([int(g) for g in unary] + [int(g) for g in binary])


BASELINE_GENOME = Genome(0, 0, 0, 0, 0, 0, 1)


# ---------------------------------------------------------------------------
# Decoded expression
# ---------------------------------------------------------------------------

@dataclass
class AlphaParams:
    """Learnable channel-wise parameters, one vector per alpha-bearing unary slot."""
    values: Dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, expr: "MeasureExpr", channels: int, value: float = 1.0) -> "AlphaParams":
        return cls({slot: np.full(channels, value, dtype=np.float64) for slot in expr.alpha_slots})

    def for_channel(self, channel: int) -> "AlphaParams":
        return AlphaParams({slot: np.asarray(v[channel], dtype=np.float64) for slot, v in self.values.items()})

    def copy(self) -> "AlphaParams":
        return AlphaParams({slot: v.copy() for slot, v in self.values.items()})


@dataclass
class MeasureGrad:
    """Partial derivatives of Y w.r.t. the counts and each alpha slot."""
    a: ArrayLike
    b: ArrayLike
    c: ArrayLike
    d: ArrayLike
    alpha: Dict[int, ArrayLike] = field(default_factory=dict)


@dataclass
class _Tape:
    inputs: List[np.ndarray]
    alphas: List[ArrayLike]
    unary_out: List[np.ndarray]
    pair1: np.ndarray
    pair2: np.ndarray


@dataclass(frozen=True)
class MeasureExpr:
    """Decoded measure Y = B3(B1(U1(a), U2(d)), B2(U3(b), U4(c)))."""
    genome: Genome
    unary: Tuple[UnaryOperator, ...]
    binary: Tuple[BinaryOperator, ...]

    @property
    def alpha_slots(self) -> Tuple[int, ...]:
        return tuple(i for i, op in enumerate(self.unary) if op.uses_alpha)

    def _alpha(self, alphas: Optional[AlphaParams], slot: int) -> ArrayLike:
        if not self.unary[slot].uses_alpha:
            return 0.0
        if alphas is None or slot not in alphas.values:
            raise ValueError(f"measure {self.genome} needs alpha for slot {slot}")
        return alphas.values[slot]

    def forward(self, a: ArrayLike, b: ArrayLike, c: ArrayLike, d: ArrayLike,
                alphas: Optional[AlphaParams] = None,
                stats: Optional[EvalStats] = None) -> Tuple[np.ndarray, _Tape]:
        """Evaluate on broadcastable count arrays; alpha vectors align with the last axis."""
        inputs = [np.asarray(v, dtype=np.float64) for v in (a, d, b, c)]
        alpha_vals = [self._alpha(alphas, slot) for slot in range(NUM_UNARY_GENES)]
        unary_out = [
            _sanitize(np.asarray(op.forward(x, al, stats), dtype=np.float64), stats)
            for op, x, al in zip(self.unary, inputs, alpha_vals)
        ]
        pair1 = _sanitize(self.binary[0].forward(unary_out[0], unary_out[1], stats), stats)
        pair2 = _sanitize(self.binary[1].forward(unary_out[2], unary_out[3], stats), stats)
        y = _sanitize(self.binary[2].forward(pair1, pair2, stats), stats)
        return y, _Tape(inputs, alpha_vals, unary_out, pair1, pair2)

    def backward(self, tape: _Tape, grad_y: ArrayLike) -> MeasureGrad:
        """Chain rule from dL/dY to dL/d(a, b, c, d) and dL/dalpha."""
        grad_y = np.asarray(grad_y, dtype=np.float64)
        g_p1, g_p2 = self.binary[2].derivative(tape.pair1, tape.pair2)
        g_p1, g_p2 = grad_y * g_p1, grad_y * g_p2
        d0, d1 = self.binary[0].derivative(tape.unary_out[0], tape.unary_out[1])
        d2, d3 = self.binary[1].derivative(tape.unary_out[2], tape.unary_out[3])
        g_u = [g_p1 * d0, g_p1 * d1, g_p2 * d2, g_p2 * d3]

        g_in = []
        g_alpha: Dict[int, ArrayLike] = {}
        for slot, op in enumerate(self.unary):
            dx, dal = op.derivative(tape.inputs[slot], tape.alphas[slot])
            g_in.append(np.nan_to_num(g_u[slot] * dx))
            if op.uses_alpha:
                g_alpha[slot] = _reduce_to(np.nan_to_num(g_u[slot] * dal), tape.alphas[slot])
        ga, gd, gb, gc = g_in
        return MeasureGrad(a=ga, b=gb, c=gc, d=gd, alpha=g_alpha)

    def evaluate(self, counts, alphas: Optional[AlphaParams] = None,
                 stats: Optional[EvalStats] = None) -> np.ndarray:
        a, b, c, d = _split_counts(counts)
        return self.forward(a, b, c, d, alphas, stats)[0]

    def formula(self) -> str:
        """Readable infix text, e.g. "(a + d) - (b + c)"."""
        terms = [
            op.template.format(x=name, alpha=f"alpha{slot + 1}")
            for slot, (op, name) in enumerate(zip(self.unary, INPUT_ORDER))
        ]
        pair1 = self.binary[0].template.format(x=terms[0], y=terms[1])
        pair2 = self.binary[1].template.format(x=terms[2], y=terms[3])
        return _strip_outer(self.binary[2].template.format(x=pair1, y=pair2))

    def slot_names(self) -> List[Tuple[str, str]]:
        labels = [f"U{i + 1}({name})" for i, name in enumerate(INPUT_ORDER)] + ["B1", "B2", "B3"]
        names = [op.name for op in self.unary] + [op.name for op in self.binary]
        return list(zip(labels, names))

    def to_sympy(self) -> sp.Expr:
        a, b, c, d = sp.symbols("a b c d", nonnegative=True)
        symbols = {"a": a, "b": b, "c": c, "d": d}
        terms = [
            op.symbolic(symbols[name], sp.Symbol(f"alpha{slot + 1}"))
            for slot, (op, name) in enumerate(zip(self.unary, INPUT_ORDER))
        ]
        pair1 = self.binary[0].symbolic(terms[0], terms[1])
        pair2 = self.binary[1].symbolic(terms[2], terms[3])
        return self.binary[2].symbolic(pair1, pair2)


def _reduce_to(grad: np.ndarray, alpha: ArrayLike) -> ArrayLike:
    """Sum a broadcast gradient back down to the shape of ``alpha``."""
    alpha = np.asarray(alpha)
    if alpha.ndim == 0:
        return float(np.sum(grad))
    grad = np.asarray(grad)
    if grad.ndim == 0:
        return np.full(alpha.shape, float(grad))
    return grad.reshape(-1, alpha.shape[-1]).sum(axis=0)


def _strip_outer(text: str) -> str:
    if not (text.startswith("(") and text.endswith(")")):
        return text
    depth = 0
    for i, ch in enumerate(text):
        depth += ch == "("
        depth -= ch == ")"
        if depth == 0 and i < len(text) - 1:
            return text
    return text[1:-1]


def _split_counts(counts) -> Tuple[float, float, float, float]:
    if hasattr(counts, "a") and hasattr(counts, "d"):
        return counts.a, counts.b, counts.c, counts.d
    values = tuple(counts)
    if len(values) != 4:
        raise ValueError(f"counts must be (a, b, c, d), got {values!r}")
    return values


def decode(genome: Union[Genome, Sequence[int]]) -> MeasureExpr:
    if not isinstance(genome, Genome):
        genome = Genome.from_genes(genome)
    return MeasureExpr(
        genome=genome,
        unary=tuple(UNARY_OPERATORS[g] for g in genome.genes[:NUM_UNARY_GENES]),
        binary=tuple(BINARY_OPERATORS[g] for g in genome.genes[NUM_UNARY_GENES:]),
    )


def eval_measure(expr: MeasureExpr, counts, alphas: Optional[AlphaParams] = None,
                 channel: int = 0, stats: Optional[EvalStats] = None) -> float:
    """Scalar Y for one count tuple at one output channel."""
    channel_alphas = alphas.for_channel(channel) if alphas is not None else None
    return float(expr.evaluate(counts, channel_alphas, stats))


def grad_measure(expr: MeasureExpr, counts, alphas: Optional[AlphaParams] = None,
                 channel: int = 0) -> MeasureGrad:
    """Scalar partial derivatives of Y at one count tuple and channel."""
    a, b, c, d = _split_counts(counts)
    channel_alphas = alphas.for_channel(channel) if alphas is not None else None
    _, tape = expr.forward(a, b, c, d, channel_alphas)
    g = expr.backward(tape, 1.0)
    return MeasureGrad(
        a=float(g.a), b=float(g.b), c=float(g.c), d=float(g.d),
        alpha={slot: float(v) for slot, v in g.alpha.items()},
    )
