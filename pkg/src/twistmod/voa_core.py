"""Built-in graded vertex algebras and their truncated realizations.

Each built-in is a free-field algebra: either bosonic generators of weight
one with oscillator brackets  [a^i_m, a^j_n] = m G_ij delta_{m+n,0},  or
odd generators of weight one half with Clifford brackets
{b^i_m, b^j_n} = G_ij delta_{m+n+1,0}.  The truncated algebra at a weight
cutoff is spanned by creation monomials applied to the vacuum; mode
actions, the translation operator, and the automorphism data (semisimple
exponent classes and the nilpotent derivation) are all realized as exact
sparse operators on that basis.

Generator indices are positive integers; index 0 is reserved for the zero
field, so the nilpotent index map sends terminal generators to 0.
"""

from __future__ import annotations

import dataclasses
from fractions import Fraction

from .linalg import Vec
from .scalars import Scalar


@dataclasses.dataclass(frozen=True)
class GeneratorInfo:
    index: int
    name: str
    weight: Fraction
    parity: int          # 0 even, 1 odd
    gweight: Fraction    # exponent class alpha in [0, 1)
    nil_image: int       # nilpotent derivation on generators; 0 = zero field


@dataclasses.dataclass
class AlgebraSpec:
    name: str
    kind: str            # "boson" or "fermion"
    generators: dict     # index -> GeneratorInfo
    gram: dict           # (i, j) -> Fraction, symmetric
    kappa: int           # nilpotency order: N^kappa = 0 on generators

    def gen(self, i):
        return self.generators[i]

    def nil(self, i):
        return 0 if i == 0 else self.generators[i].nil_image

    def gram_at(self, i, j):
        return self.gram.get((i, j), self.gram.get((j, i), Fraction(0)))

    def indices(self):
        return sorted(self.generators)

    def gweight_denominators(self):
        return [g.gweight.denominator for g in self.generators.values()]

    def max_log_power(self):
        """Strict bound on log powers: nilpotency order minus one."""
        return self.kappa - 1

    def validate(self):
        for i, g in self.generators.items():
            if i <= 0:
                raise ValueError("generator index must be positive")
            if g.nil_image not in self.generators and g.nil_image != 0:
                raise ValueError("nil image %d of %d undefined" % (g.nil_image, i))
            if not 0 <= g.gweight < 1:
                raise ValueError("gweight must lie in [0, 1)")
        # nilpotency within kappa steps
        for i in self.generators:
            cur = i
            for _ in range(self.kappa):
                cur = self.nil(cur)
            if cur != 0:
                raise ValueError("nilpotent map does not vanish in %d steps"
                                 % self.kappa)
        # the derivation must be compatible with the bracket:
        # <N a, b> + <a, N b> = 0, and exponent classes must match under N
        for i in self.generators:
            for j in self.generators:
                s = Fraction(0)
                if self.nil(i):
                    s += self.gram_at(self.nil(i), j)
                if self.nil(j):
                    s += self.gram_at(i, self.nil(j))
                if s != 0:
                    raise ValueError("nilpotent map is not gram-skew at "
                                     "(%d, %d)" % (i, j))
            if self.nil(i) and self.gen(self.nil(i)).gweight != self.gen(i).gweight:
                raise ValueError("nilpotent map mixes exponent classes")
        return self


# ---------------------------------------------------------------------------
# Built-ins.

def _mk(name, kind, gens, gram, kappa):
    spec = AlgebraSpec(name=name, kind=kind,
                       generators={g.index: g for g in gens},
                       gram=gram, kappa=kappa)
    return spec.validate()


def builtin_algebra(name):
    """Return a built-in algebra; name may carry an automorphism suffix."""
    if name == "heisenberg1":
        return _mk("heisenberg1", "boson",
                   [GeneratorInfo(1, "a", Fraction(1), 0, Fraction(0), 0)],
                   {(1, 1): Fraction(1)}, 1)
    if name == "heisenberg1:neg":
        return _mk("heisenberg1:neg", "boson",
                   [GeneratorInfo(1, "a", Fraction(1), 0, Fraction(1, 2), 0)],
                   {(1, 1): Fraction(1)}, 1)
    if name == "fermion":
        # parity automorphism: the odd generator sits in class 1/2
        return _mk("fermion", "fermion",
                   [GeneratorInfo(1, "b", Fraction(1, 2), 1, Fraction(1, 2), 0)],
                   {(1, 1): Fraction(1)}, 1)
    if name == "fermion:id":
        return _mk("fermion:id", "fermion",
                   [GeneratorInfo(1, "b", Fraction(1, 2), 1, Fraction(0), 0)],
                   {(1, 1): Fraction(1)}, 1)
    if name == "heisenberg2_nilpotent":
        return _mk("heisenberg2_nilpotent", "boson",
                   [GeneratorInfo(1, "a", Fraction(1), 0, Fraction(0), 2),
                    GeneratorInfo(2, "b", Fraction(1), 0, Fraction(0), 0)],
                   {(1, 1): Fraction(1)}, 2)
    raise KeyError("unknown built-in algebra %r" % name)


BUILTIN_NAMES = ("heisenberg1", "heisenberg1:neg", "fermion", "fermion:id",
                 "heisenberg2_nilpotent")


# ---------------------------------------------------------------------------
# Spec file round trip.

_SCHEMA = 1


def save_algebra(spec, path):
    lines = ["schema = %d" % _SCHEMA,
             "name = %s" % spec.name,
             "kind = %s" % spec.kind,
             "kappa = %d" % spec.kappa,
             "[generators]"]
    for i in spec.indices():
        g = spec.gen(i)
        lines.append("%d %s %s %d %s %d" % (g.index, g.name, g.weight,
                                            g.parity, g.gweight, g.nil_image))
    lines.append("[gram]")
    for i in spec.indices():
        for j in spec.indices():
            if j < i:
                continue
            lines.append("%d %d %s" % (i, j, spec.gram_at(i, j)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_algebra(name_or_path):
    if name_or_path in BUILTIN_NAMES:
        return builtin_algebra(name_or_path)
    with open(name_or_path) as fh:
        text = fh.read()
    header = {}
    gens = []
    gram = {}
    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            section = line.strip("[]")
            continue
        if section is None:
            key, _, val = line.partition("=")
            header[key.strip()] = val.strip()
        elif section == "generators":
            idx, name, wt, par, gw, nil = line.split()
            gens.append(GeneratorInfo(int(idx), name, Fraction(wt), int(par),
                                      Fraction(gw), int(nil)))
        elif section == "gram":
            i, j, v = line.split()
            gram[(int(i), int(j))] = Fraction(v)
        else:
            raise ValueError("unknown section %r" % section)
    if int(header.get("schema", "0")) != _SCHEMA:
        raise ValueError("unsupported schema %r" % header.get("schema"))
    return _mk(header["name"], header["kind"], gens, gram, int(header["kappa"]))


# ---------------------------------------------------------------------------
# Truncated algebra realization.
#
# A basis key is a tuple of (i, m) creation pairs, m <= -1, sorted
# ascending; the key denotes the product of the listed modes, in order,
# applied to the vacuum ().  For fermions a key never repeats a pair and
# carries the listed order as its sign convention.

def mode_weight(spec, i, m):
    return spec.gen(i).weight - m - 1


def key_weight(spec, key):
    return sum((mode_weight(spec, i, m) for i, m in key), Fraction(0))


def key_parity(spec, key):
    return sum(spec.gen(i).parity for i, m in key) % 2


def key_gclass(spec, key):
    return sum((spec.gen(i).gweight for i, m in key), Fraction(0)) % 1


class GradedSpace:
    """Weight-truncated free-field space with deterministic basis order."""

    def __init__(self, spec, cutoff):
        self.spec = spec
        self.cutoff = Fraction(cutoff)
        self.basis = self._enumerate()
        self.position = {k: p for p, k in enumerate(self.basis)}

    def _enumerate(self):
        spec = self.spec
        out = [()]
        frontier = [()]
        while frontier:
            nxt = []
            for key in frontier:
                floor = key[-1] if key else None
                for i in spec.indices():
                    for m in self._creation_modes(i, key):
                        pair = (i, m)
                        if floor is not None and pair < floor:
                            continue
                        if spec.kind == "fermion" and key and pair == floor:
                            continue
                        cand = key + (pair,)
                        if key_weight(spec, cand) <= self.cutoff:
                            nxt.append(cand)
            out.extend(nxt)
            frontier = nxt
        return sorted(out, key=lambda k: (key_weight(self.spec, k), k))

    def _creation_modes(self, i, key):
        spec = self.spec
        room = self.cutoff - key_weight(spec, key)
        m = -1
        while mode_weight(spec, i, m) <= room:
            yield m
            m -= 1

    def slot(self, weight, parity=None, gclass=None):
        out = []
        for k in self.basis:
            if key_weight(self.spec, k) != weight:
                continue
            if parity is not None and key_parity(self.spec, k) != parity:
                continue
            if gclass is not None and key_gclass(self.spec, k) != gclass:
                continue
            out.append(k)
        return out

    def weights(self):
        return sorted({key_weight(self.spec, k) for k in self.basis})


def apply_mode(spec, i, m, key, cutoff):
    """a^i_m (or b^i_m) applied to a basis key, truncated at the cutoff."""
    if i == 0:
        return Vec()
    if spec.kind == "boson":
        if m <= -1:
            cand = tuple(sorted(key + ((i, m),)))
            if key_weight(spec, cand) > cutoff:
                return Vec()
            return Vec.unit(cand)
        out = Vec()
        seen = set()
        for t, (j, n) in enumerate(key):
            if (j, n) in seen:
                continue
            seen.add((j, n))
            if n + m == 0:
                coef = Fraction(m) * spec.gram_at(i, j) * key.count((j, n))
                if coef:
                    rest = list(key)
                    rest.remove((j, n))
                    out = out + Vec.unit(tuple(rest),
                                         Scalar.from_rational(coef))
        return out
    # fermion
    if m <= -1:
        pair = (i, m)
        if pair in key:
            return Vec()
        pos = 0
        while pos < len(key) and key[pos] < pair:
            pos += 1
        cand = key[:pos] + (pair,) + key[pos:]
        if key_weight(spec, cand) > cutoff:
            return Vec()
        sign = -1 if pos % 2 else 1
        return Vec.unit(cand, Scalar.from_rational(sign))
    out = Vec()
    for t, (j, n) in enumerate(key):
        if m + n + 1 == 0:
            coef = spec.gram_at(i, j) * (-1 if t % 2 else 1)
            if coef:
                rest = key[:t] + key[t + 1:]
                out = out + Vec.unit(tuple(rest), Scalar.from_rational(coef))
    return out


def apply_mode_vec(spec, i, m, vec, cutoff):
    out = Vec()
    for key, c in vec.items.items():
        out = out + apply_mode(spec, i, m, key, cutoff).scale(c)
    return out


def translation_op(spec, key, cutoff):
    """L(-1) on a basis key by the Leibniz rule: (i, m) -> -m * (i, m-1).
    Lowering happens in place, which keeps fermion signs correct."""
    out = Vec()
    for t, (j, n) in enumerate(key):
        lowered = key[:t] + ((j, n - 1),) + key[t + 1:]
        out = out + _canonicalize(spec, lowered, Fraction(-n), cutoff)
    return out


def _canonicalize(spec, raw, coef, cutoff):
    """Reorder a raw (i, m) product into the canonical basis key."""
    if key_weight(spec, raw) > cutoff:
        return Vec()
    if spec.kind == "boson":
        return Vec.unit(tuple(sorted(raw)), Scalar.from_rational(coef))
    pairs = list(raw)
    sign = 1
    for a in range(1, len(pairs)):
        b = a
        while b > 0 and pairs[b] < pairs[b - 1]:
            pairs[b], pairs[b - 1] = pairs[b - 1], pairs[b]
            sign = -sign
            b -= 1
    a = 1
    while a < len(pairs):
        if pairs[a] == pairs[a - 1]:
            i, n = pairs[a]
            if spec.gen(i).weight - n - 1 == 0:
                # a weight-zero mode squares to half its pairing, centrally
                coef = coef * spec.gram_at(i, i) / 2
                del pairs[a - 1:a + 1]
                a = max(a - 1, 1)
                continue
            return Vec()
        a += 1
    return Vec.unit(tuple(pairs), Scalar.from_rational(coef * sign))


def nil_action(spec, key):
    """The nilpotent derivation on a basis key (Leibniz over the slots)."""
    out = Vec()
    for t, (j, n) in enumerate(key):
        nj = spec.nil(j)
        if nj == 0:
            continue
        out = out + Vec.unit(key[:t] + ((nj, n),) + key[t + 1:])
    # canonical order is preserved only when indices stay sorted; fix up
    fixed = Vec()
    for k, c in out.items.items():
        fixed = fixed + _canonicalize(spec, k, Fraction(1), Fraction(10**9)).scale(c)
    return fixed


def nil_action_vec(spec, vec):
    out = Vec()
    for key, c in vec.items.items():
        out = out + nil_action(spec, key).scale(c)
    return out


def semisimple_exponent(spec, key):
    """Eigenvalue of the semisimple exponent operator, taken in [0, 1)."""
    return key_gclass(spec, key)


def g_action(spec, key, tau_terms=True):
    """The automorphism  g = e^{2 pi i S} e^{2 pi i N}  on a basis key.

    With the formal tau symbol, e^{2 pi i N} = sum_k tau^k N^k / k!.
    """
    from math import factorial
    phase = Scalar.root_of_unity(semisimple_exponent(spec, key))
    out = Vec.unit(key, phase)
    cur = Vec.unit(key)
    # N is nilpotent on each monomial (order grows with the slot count)
    k = 0
    while True:
        k += 1
        cur = nil_action_vec(spec, cur)
        if cur.is_zero():
            break
        coeff = Scalar.tau(k) * Fraction(1, factorial(k)) * phase
        out = out + cur.scale(coeff)
    return out


def g_inverse_action(spec, key):
    from math import factorial
    phase = Scalar.root_of_unity((-semisimple_exponent(spec, key)) % 1)
    out = Vec.unit(key, phase)
    cur = Vec.unit(key)
    k = 0
    while True:
        k += 1
        cur = nil_action_vec(spec, cur)
        if cur.is_zero():
            break
        coeff = Scalar.tau(k) * Fraction((-1) ** k, factorial(k)) * phase
        out = out + cur.scale(coeff)
    return out


def check_automorphism(spec, cutoff):
    """Verify the automorphism data on the truncated algebra.

    Checks, for every generator mode within the cutoff and every basis key:
      g a^i_m g^{-1} = (g-on-generators) a^._m   as tau-polynomial identity,
      [N, a^i_m] = a^{N(i)}_m, and that N kills the vacuum.
    Returns a report dict; every entry must be True.
    """
    space = GradedSpace(spec, cutoff)
    report = {"conjugation": True, "derivation": True, "vacuum": True}
    if not nil_action(spec, ()).is_zero():
        report["vacuum"] = False
    mmax = int(cutoff) + 1
    for i in spec.indices():
        for m in range(-mmax, mmax + 1):
            for key in space.basis:
                lhs = Vec()
                for k2, c in g_inverse_action(spec, key).items.items():
                    step = apply_mode(spec, i, m, k2, cutoff).scale(c)
                    for k3, c3 in step.items.items():
                        lhs = lhs + g_action(spec, k3).scale(c3)
                # g on the generator: phase e^{2 pi i alpha_i} times
                # sum_k tau^k N^k(i) / k!
                from math import factorial
                rhs = Vec()
                cur, fac = i, 1
                for k in range(spec.kappa):
                    if cur == 0:
                        break
                    coeff = Scalar.root_of_unity(spec.gen(i).gweight) * \
                        Fraction(1, fac)
                    if k:
                        coeff = coeff * Scalar.tau(k)
                    rhs = rhs + apply_mode(spec, cur, m, key, cutoff).scale(coeff)
                    cur = spec.nil(cur)
                    fac *= k + 1
                if not (lhs - rhs).is_zero():
                    report["conjugation"] = False
                comm = nil_action_vec(spec, apply_mode(spec, i, m, key, cutoff)) \
                    - apply_mode_vec(spec, i, m, nil_action(spec, key), cutoff)
                want = apply_mode(spec, spec.nil(i), m, key, cutoff)
                if not (comm - want).is_zero():
                    report["derivation"] = False
    report["ok"] = all(report.values())
    return report


def vertex_operator(spec, cutoff, u_key_or_vec, module=None):
    """Vertex operator map for the algebra acting on itself.

    Thin wrapper over the residue construction; see twisted_vertex for the
    machinery.  Returns a TwistedVOM restricted to the requested vector.
    """
    from .twisted_vertex import define_twisted_vom, regular_module
    mod = module if module is not None else regular_module(spec, cutoff)
    return define_twisted_vom(mod)
