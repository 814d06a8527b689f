"""Universal lower-bounded twisted modules, constructed by exact quotient.

The ambient space is spanned by words
    (chain of generator modes) (seed mode) (tail algebra vector)
where the chain holds pairs (generator index, mode exponent), the seed mode
is a pair (seed label, mode exponent), and the tail is a basis monomial of
the truncated algebra.  A word is admissible when the weight of every
suffix lies in [lower_bound, cutoff] and the chain is no longer than the
chain cap; words whose suffix drops below the lower bound are genuinely
zero (the lower-bound ideal), while words beyond the cutoff or the cap are
truncated away, and the trust bookkeeping of the relation generator makes
sure no relation is imposed whose derivation passes through a truncated
word.

Admissible words form an infinite set whenever a generator has a
weight-preserving mode, so the module is built by completion rather than
enumeration: words are registered on demand, every new word triggers the
relation family governing its head (the generator-pair straightening for a
chain of length two or more, the generator-seed commutation family for a
chain of length one), and the per-slot row reducers eliminate the word with
the longest chain in each relation, so the surviving normal words stay
short and the completion terminates.

Log modes are not stored: the mode of log power k for generator i is
(-1)^k / k!  times the plain mode of generator N^k(i), and the seed mode of
log power k routes N^k onto the tail the same way.  The two translation
style operators are likewise defined by their recursion on words.
"""

from __future__ import annotations

import dataclasses
from fractions import Fraction
from math import factorial

from .linalg import Vec, RowReducer
from .scalars import Scalar
from . import voa_core as vc


# ---------------------------------------------------------------------------
# Seed data.

@dataclasses.dataclass
class SeedSpace:
    labels: list
    weight: dict
    parity: dict
    gclass: dict
    nil: dict        # label -> dict label -> Fraction   (nilpotent action)
    l0_nil: dict     # label -> dict label -> Fraction   (log part of L(0))

    @staticmethod
    def single(label="w", weight=Fraction(0), parity=0, gclass=Fraction(0)):
        return SeedSpace([label], {label: Fraction(weight)},
                         {label: parity}, {label: Fraction(gclass) % 1},
                         {label: {}}, {label: {}})

    def validate(self):
        for a in self.labels:
            for tgt in list(self.nil.get(a, {})) + list(self.l0_nil.get(a, {})):
                if tgt not in self.labels:
                    raise ValueError("unknown seed label %r" % tgt)
        return self


_SEED_SCHEMA = 1


def save_seed(seed, path):
    lines = ["schema = %d" % _SEED_SCHEMA, "[vectors]"]
    for a in seed.labels:
        lines.append("%s %s %d %s" % (a, seed.weight[a], seed.parity[a],
                                      seed.gclass[a]))
    lines.append("[nil]")
    for a in seed.labels:
        for b, c in sorted(seed.nil.get(a, {}).items()):
            lines.append("%s %s %s" % (a, b, c))
    lines.append("[l0nil]")
    for a in seed.labels:
        for b, c in sorted(seed.l0_nil.get(a, {}).items()):
            lines.append("%s %s %s" % (a, b, c))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_seed(path):
    labels, weight, parity, gclass = [], {}, {}, {}
    nil, l0_nil = {}, {}
    section = None
    header = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                section = line.strip("[]")
                continue
            if section is None:
                key, _, val = line.partition("=")
                header[key.strip()] = val.strip()
            elif section == "vectors":
                a, wt, par, gc = line.split()
                labels.append(a)
                weight[a] = Fraction(wt)
                parity[a] = int(par)
                gclass[a] = Fraction(gc)
                nil.setdefault(a, {})
                l0_nil.setdefault(a, {})
            elif section == "nil":
                a, b, c = line.split()
                nil.setdefault(a, {})[b] = Fraction(c)
            elif section == "l0nil":
                a, b, c = line.split()
                l0_nil.setdefault(a, {})[b] = Fraction(c)
    if int(header.get("schema", "0")) != _SEED_SCHEMA:
        raise ValueError("unsupported seed schema")
    return SeedSpace(labels, weight, parity, gclass, nil, l0_nil).validate()


class InconsistentGrading(ValueError):
    """Seed or relation data violates the weight or class grading."""


class NotEquivariant(ValueError):
    """An induced map fails to intertwine the module structures."""


# ---------------------------------------------------------------------------
# Spanning elements.

class SpanningElement:
    """Interned spanning word with cached hash.

    chain: ((i, n), ...) outermost first; seed: (label, n); tail: algebra
    basis key.  Interning makes equal words identical objects, so the hot
    dict operations hit the identity fast path.
    """

    __slots__ = ("chain", "seed", "tail", "_hash")

    def __init__(self, chain, seed, tail):
        self.chain = chain
        self.seed = seed
        self.tail = tail
        self._hash = hash((chain, seed, tail))

    def _key(self):
        return (self.chain, self.seed, self.tail)

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        return isinstance(other, SpanningElement) and \
            self._hash == other._hash and self._key() == other._key()

    def __lt__(self, other):
        return self._key() < other._key()

    def __repr__(self):
        return "SpanningElement(chain=%r, seed=%r, tail=%r)" % (
            self.chain, self.seed, self.tail)


_INTERN = {}


def _word(chain, seed, tail):
    key = (tuple(chain), tuple(seed), tuple(tail))
    w = _INTERN.get(key)
    if w is None:
        w = SpanningElement(*key)
        _INTERN[key] = w
    return w


# Pivot order is built per module: relations eliminate the word with the
# longest chain first (rewriting mode applications into seed modes with
# deeper tails), then the heavier tail, with a lexicographic tie-break.
# The surviving normal words are concentrated in the chain-free seed
# layer, which is finite; chained words survive only near the truncation
# boundary where the rewriting relation is not trusted.


class UniversalModule:
    def __init__(self, algebra, seed, cutoff, lower_bound=Fraction(0),
                 tail_cutoff=None, chain_cap=None):
        self.spec = algebra
        self.seed = seed
        self.cutoff = Fraction(cutoff)
        self.lower_bound = Fraction(lower_bound)
        if tail_cutoff is None:
            tail_cutoff = self.cutoff - self.lower_bound
        self.tail_cutoff = Fraction(tail_cutoff)
        if chain_cap is None:
            # longest chain of strictly weight-raising modes that fits in the
            # window: each such mode raises the weight by at least the
            # smallest positive mode weight any generator admits
            step = Fraction(1)
            for i in algebra.indices():
                g = algebra.gen(i)
                f = (g.weight - 1 - g.gweight) % 1
                if f > 0:
                    step = min(step, f)
            chain_cap = int(_ceil((self.cutoff - self.lower_bound) / step))
        self.chain_cap = chain_cap
        self.vspace = vc.GradedSpace(algebra, self.tail_cutoff)
        self.jmax = int(self.cutoff - self.lower_bound) + algebra.kappa + 6
        self.words = []
        self.word_set = set()
        self.reducers = {}     # (weight, class) -> RowReducer
        self.built = False
        self.closure_log = []
        self._families_done = set()
        self._family_queue = []
        self.parents = {}      # word -> set of (i, n) prepends already built
        self._meta = {}        # word -> (weight, class)
        self._closed = {}      # (slot, pivot) -> set of processed closures

    # -- word bookkeeping ---------------------------------------------------

    def _word_meta(self, w):
        meta = self._meta.get(w)
        if meta is None:
            spec, seed = self.spec, self.seed
            total = seed.weight[w.seed[0]] - w.seed[1] - 1 + \
                vc.key_weight(spec, w.tail)
            cls = seed.gclass[w.seed[0]] + vc.key_gclass(spec, w.tail)
            for i, n in w.chain:
                total += spec.gen(i).weight - n - 1
                cls += spec.gen(i).gweight
            meta = (total, cls % 1)
            self._meta[w] = meta
        return meta

    def word_weight(self, w):
        return self._word_meta(w)[0]

    def word_class(self, w):
        return self._word_meta(w)[1]

    def word_parity(self, w):
        spec, seed = self.spec, self.seed
        p = seed.parity[w.seed[0]] + vc.key_parity(spec, w.tail)
        for i, n in w.chain:
            p += spec.gen(i).parity
        return p % 2

    def _slot(self, w):
        return self._word_meta(w)

    def _register(self, w):
        if w not in self.word_set:
            self.word_set.add(w)
            self.words.append(w)
            if w.chain:
                suffix = _word(w.chain[1:], w.seed, w.tail)
                self.parents.setdefault(suffix, set()).add(w.chain[0])

    def _family_tag(self, w):
        """The relation family governing the head of a chained word."""
        if len(w.chain) >= 2:
            suffix2 = _word(w.chain[2:], w.seed, w.tail)
            return ("pp", w.chain[0][0], w.chain[1][0], suffix2)
        return ("ps", w.chain[0][0], w.seed[0], w.tail)

    # -- admissibility ------------------------------------------------------

    def enumerate_spanning(self):
        """Register the chain-free seed layer; chains grow on demand."""
        spec, seed = self.spec, self.seed
        B, L = self.lower_bound, self.cutoff
        for a in seed.labels:
            for u in self.vspace.basis:
                cls = vc.key_gclass(spec, u)
                wtu = vc.key_weight(spec, u)
                lo = seed.weight[a] - 1 + wtu - L
                hi = seed.weight[a] - 1 + wtu - B
                n = cls + _ceil_diff(lo, cls)
                while n <= hi:
                    if not self._is_lowerbound_unit_data(a, n, u):
                        self._register(_word((), (a, n), u))
                    n += 1
        return list(self.words)

    def _is_lowerbound_unit_data(self, a, n, u):
        """Seed modes on the vacuum with exponent outside -1, -2, ... are
        lower-bound ideal generators, hence zero."""
        return u == () and n >= 0

    def _seed_exponents(self, a, u):
        spec, seed = self.spec, self.seed
        cls = vc.key_gclass(spec, u)
        wtu = vc.key_weight(spec, u)
        lo = seed.weight[a] - 1 + wtu - self.cutoff
        hi = seed.weight[a] - 1 + wtu - self.lower_bound
        n = cls + _ceil_diff(lo, cls)
        out = []
        while n <= hi:
            out.append(n)
            n += 1
        return out

    def _prepend_exponents(self, i, suffix_weight):
        """Mode exponents n with B <= suffix_weight + wt_i - n - 1 <= cutoff."""
        g = self.spec.gen(i)
        lo = g.weight - 1 + suffix_weight - self.cutoff
        hi = g.weight - 1 + suffix_weight - self.lower_bound
        n = g.gweight + _ceil_diff(lo, g.gweight)
        out = []
        while n <= hi:
            out.append(n)
            n += 1
        return out

    def _admissible(self, w):
        """Every suffix weight must lie in [lower_bound, cutoff]."""
        if len(w.chain) > self.chain_cap:
            return False
        wt = self.seed.weight[w.seed[0]] - w.seed[1] - 1 + \
            vc.key_weight(self.spec, w.tail)
        if not (self.lower_bound <= wt <= self.cutoff):
            return False
        for i, n in reversed(w.chain):
            wt += self.spec.gen(i).weight - n - 1
            if not (self.lower_bound <= wt <= self.cutoff):
                return False
        return True

    def _prepend(self, w, i, n):
        """Free prepend; returns None when the result is truncated away and
        an empty Vec when it is genuinely zero (below the lower bound)."""
        cand = _word(((i, n),) + w.chain, w.seed, w.tail)
        wt = self.word_weight(cand)
        if wt < self.lower_bound:
            return Vec()
        if wt > self.cutoff:
            return None
        if len(cand.chain) > self.chain_cap:
            return None
        self._register(cand)
        return Vec.unit(cand)

    def _seed_word_vec(self, a, n, u):
        if self._is_lowerbound_unit_data(a, n, u):
            return Vec()
        wt = self.seed.weight[a] - n - 1 + vc.key_weight(self.spec, u)
        if wt < self.lower_bound:
            return Vec()
        if wt > self.cutoff:
            return None
        w = _word((), (a, n), u)
        self._register(w)
        return Vec.unit(w)

    # -- series helpers for relation generation -----------------------------

    def _psi_series(self, a, tail_vec):
        """psi^a(x2) applied to a tail vector; dict (e2, k2) -> Vec(words)."""
        spec = self.spec
        out = {}
        comp = tail_vec
        k = 0
        while not comp.is_zero():
            for u, cu in comp.items.items():
                for n in self._seed_exponents(a, u):
                    res = self._seed_word_vec(a, n, u)
                    if res is None or res.is_zero():
                        continue
                    coeff = cu * Scalar.from_rational(
                        Fraction((-1) ** k, factorial(k)))
                    key = (-n - 1, k)
                    out.setdefault(key, Vec())
                    out[key] = out[key] + res.scale(coeff)
            nxt = Vec()
            for u, cu in comp.items.items():
                nxt = nxt + vc.nil_action(spec, u).scale(cu)
            comp = nxt
            k += 1
            if k > 8 * (self.spec.kappa + 1):
                raise RuntimeError("runaway log expansion")
        return out

    def _phi_apply(self, i, series2, var):
        """phi^i_W(x_var) applied on the left of a two-variable word series.

        series2: dict ((e1,k1),(e2,k2)) -> Vec(words); var is 0 or 1.
        Prepends every in-window mode; words that would be truncated are
        recorded in the returned poison set of monomial keys.
        """
        spec = self.spec
        out, poison = {}, set()
        for key, vec in series2.items():
            for w, c in vec.items.items():
                s = self.word_weight(w)
                for n in self._prepend_exponents(i, s):
                    k = 0
                    j = i
                    while j != 0:
                        res = self._prepend(w, j, n)
                        coeff = c * Scalar.from_rational(
                            Fraction((-1) ** k, factorial(k)))
                        nk = _bump(key, var, -n - 1, k)
                        if res is None:
                            poison.add(nk)
                        elif not res.is_zero():
                            out.setdefault(nk, Vec())
                            out[nk] = out[nk] + res.scale(coeff)
                        j = spec.nil(j)
                        k += 1
        return out, poison

    # -- relation generation ------------------------------------------------

    def m_exponent(self, i, a):
        """Smallest positive integer exceeding
        wt phi^i - 1 + wt seed^a - lower_bound - gweight_i."""
        g = self.spec.gen(i)
        x = g.weight - 1 + self.seed.weight[a] - self.lower_bound - g.gweight
        m = _floor(x) + 1
        return max(1, m)

    def mm_exponent(self, i, j):
        """Pole-clearing order for a generator pair."""
        return int(_ceil(self.spec.gen(i).weight + self.spec.gen(j).weight))

    def _phi_psi_relations(self, i, a, u):
        """Trusted coefficients of the generalized commutativity difference
        for generator i, seed label a, tail basis key u."""
        spec, seed = self.spec, self.seed
        g = spec.gen(i)
        M = self.m_exponent(i, a)
        r = g.gweight + M
        sign = Scalar.from_rational((-1) ** (g.parity * seed.parity[a]))
        wtu = vc.key_weight(spec, u)

        lhs_base = _lift2(self._psi_series(a, Vec.unit(u)), var=1)
        lhs, poison_l = self._conjugated_phi_on_words(i, lhs_base, region="first")
        lhs, poison_l = _mul2_scalar(_expand_A(r, "first", self.jmax), lhs, poison_l)

        inner, poison_r = self._conjugated_phi_on_tail(i, u, region="second")
        rhs = {}
        for key, tvec in inner.items():
            psis = self._psi_series(a, tvec)
            for (e2, k2), wvec in psis.items():
                nk = _merge2(key, (e2, k2))
                rhs.setdefault(nk, Vec())
                rhs[nk] = rhs[nk] + wvec
        rhs, poison_r = _mul2_scalar(_expand_A(r, "second", self.jmax), rhs, poison_r)

        out = []
        for key in set(lhs) | set(rhs):
            (e1, k1), (e2, k2) = key
            # trust: the derivation of this coefficient must not touch any
            # truncated word (see module docstring)
            if seed.weight[a] + wtu + e2 > self.cutoff:
                continue
            if g.weight + wtu + e1 > self.tail_cutoff:
                continue
            if key in poison_l or key in poison_r:
                continue
            vec = lhs.get(key, Vec()) - rhs.get(key, Vec()).scale(sign)
            if not vec.is_zero():
                out.append(vec)
        return out

    def _conjugated_phi_on_words(self, i, series2, region):
        """(x1-x2)^{N} phi^i(x1) (x1-x2)^{-N} acting on a word series."""
        spec = self.spec
        out, poison = {}, set()
        logpow = _scalar_one_series()
        r = 0
        j = i
        while j != 0:
            part, local_poison = self._phi_apply(j, series2, var=0)
            coeff = Fraction(1, factorial(r))
            part, ppoison = _mul2_scalar(
                _scale_series(logpow, coeff), part, local_poison)
            _accumulate(out, part)
            poison |= ppoison
            j = spec.nil(j)
            r += 1
            if j != 0:
                logpow = _mul_scalar_series(
                    logpow, _expand_L(region, self.jmax))
        return out, poison

    def _conjugated_phi_on_tail(self, i, u, region):
        """(-x2+x1)^{N} phi^i_V(x1) (-x2+x1)^{-N} applied to a tail key.

        Returns dict ((e1,k1),(e2,k2)) -> Vec(V keys), plus a poison set for
        coefficients whose tail overflowed the tail cutoff.
        """
        spec = self.spec
        out, poison = {}, set()
        logpow = _scalar_one_series()
        r = 0
        j = i
        wtu = vc.key_weight(spec, u)
        while j != 0:
            part = {}
            local_poison = set()
            mlo = int(_floor(spec.gen(j).weight - 1 + wtu - self.tail_cutoff)) - 1
            mhi = int(_ceil(spec.gen(j).weight - 1 + wtu)) + 1
            for m in range(mlo, mhi + 1):
                tw = spec.gen(j).weight - m - 1 + wtu
                key = ((Fraction(-m - 1), 0), (Fraction(0), 0))
                if tw > self.tail_cutoff:
                    local_poison.add(key)
                    continue
                res = vc.apply_mode(spec, j, m, u, self.tail_cutoff)
                if not res.is_zero():
                    part[key] = res
            coeff = Fraction(1, factorial(r))
            part, ppoison = _mul2_scalar(
                _scale_series(logpow, coeff), part, local_poison)
            _accumulate(out, part)
            poison |= ppoison
            j = spec.nil(j)
            r += 1
            if j != 0:
                logpow = _mul_scalar_series(
                    logpow, _expand_L(region, self.jmax))
        return out, poison

    def _phi_phi_relations(self, i, j, w):
        """Trusted coefficients of weak commutativity for a generator pair
        applied at the head of word w."""
        spec = self.spec
        gi, gj = spec.gen(i), spec.gen(j)
        M = self.mm_exponent(i, j)
        sign = Scalar.from_rational((-1) ** (gi.parity * gj.parity))
        s0 = self.word_weight(w)
        base = {((Fraction(0), 0), (Fraction(0), 0)): Vec.unit(w)}

        inner_l, p1 = self._phi_apply(j, base, var=1)
        lhs, poison_l = self._phi_apply(i, inner_l, var=0)
        lhs, poison_l = _mul2_scalar(_expand_A(Fraction(M), "first", self.jmax),
                                     lhs, poison_l | p1)

        inner_r, p2 = self._phi_apply(i, base, var=0)
        rhs, poison_r = self._phi_apply(j, inner_r, var=1)
        rhs, poison_r = _mul2_scalar(_expand_A(Fraction(M), "second", self.jmax),
                                     rhs, poison_r | p2)

        out = []
        for key in set(lhs) | set(rhs):
            (e1, k1), (e2, k2) = key
            if s0 + gj.weight + e2 > self.cutoff:
                continue
            if s0 + gi.weight + e1 > self.cutoff:
                continue
            if key in poison_l or key in poison_r:
                continue
            vec = lhs.get(key, Vec()) - rhs.get(key, Vec()).scale(sign)
            if not vec.is_zero():
                out.append(vec)
        return out

    # -- quotient -----------------------------------------------------------

    def _add_relation(self, vec):
        if vec.is_zero():
            return False
        w0 = next(iter(vec.items))
        slot = self._slot(w0)
        for w in vec.items:
            if self._slot(w) != slot:
                raise InconsistentGrading("relation mixes slots %r and %r"
                                          % (slot, self._slot(w)))
        red = self.reducers.setdefault(slot,
                                       RowReducer(pivot_key=self._pivot_order))
        return red.add(vec)

    def _pivot_order(self, w):
        return (-len(w.chain), -vc.key_weight(self.spec, w.tail), w._key())

    def impose_JB(self):
        """The lower-bound ideal: seed modes on the vacuum with exponent
        outside -1, -2, ... and every word below the lower bound.  Both are
        enforced structurally (such words are never admissible), so this
        records the count of suppressed vacuum units for reporting."""
        spec, seed = self.spec, self.seed
        count = 0
        for a in seed.labels:
            hi = seed.weight[a] - 1 - self.lower_bound
            n = Fraction(0)
            while n <= hi:
                count += 1
                n += 1
        self.jb_units = count
        return count

    def impose_J(self):
        """One full round: drain the relation-family queue, close the row
        space along existing prepend edges and the grading recursions, then
        extend the word registry by one mode over every normal word.
        Returns True when anything changed."""
        changed = False
        if self._family_round():
            changed = True
        if self._closure_round():
            changed = True
        if self._candidate_round():
            changed = True
        return changed

    def build_quotient(self, max_rounds=60):
        for a in self.seed.labels:
            if self.seed.nil.get(a) or self.seed.l0_nil.get(a):
                raise NotImplementedError(
                    "nontrivial seed nilpotents are not supported yet")
        if not self.words:
            self.enumerate_spanning()
        self.impose_JB()
        # the seed-level families exist even for words never reached by a
        # prepend, e.g. heavy-tail seed modes that must rewrite into chains
        for a in self.seed.labels:
            for i in self.spec.indices():
                for u in self.vspace.basis:
                    self._family_queue.append(("ps", i, a, u))
        for round_no in range(max_rounds):
            changed = self.impose_J()
            self.closure_log.append((round_no, self.rank(), len(self.words)))
            if not changed:
                break
        else:
            raise RuntimeError("quotient completion did not stabilize")
        self.built = True
        return self

    def _family_round(self):
        """Generate relation families for the heads of the surviving normal
        words.  Words already eliminated never trigger generation: at the
        fixpoint every normal chained word has had its head family imposed,
        which is all the straightening the quotient needs."""
        changed = False
        pivots = set()
        for red in self.reducers.values():
            pivots |= red.pivot_keys()
        for w in self.words:
            if not w.chain or w in pivots:
                continue
            # when the two-step suffix is already eliminated, closure along
            # the prepend edges eliminates this word too, so only words over
            # surviving suffixes need their own straightening family
            if len(w.chain) >= 2 and \
                    _word(w.chain[2:], w.seed, w.tail) in pivots:
                continue
            tag = self._family_tag(w)
            if tag not in self._families_done:
                self._family_queue.append(tag)
        while self._family_queue:
            tag = self._family_queue.pop()
            if tag in self._families_done:
                continue
            self._families_done.add(tag)
            if tag[0] == "ps":
                _, i, a, u = tag
                rels = self._phi_psi_relations(i, a, u)
            else:
                _, i, j, suffix2 = tag
                if len(suffix2.chain) + 2 > self.chain_cap:
                    continue
                rels = self._phi_phi_relations(i, j, suffix2)
            for vec in rels:
                if self._add_relation(vec):
                    changed = True
        return changed

    def _closure_round(self):
        """Close the row space along prepend edges present in the registry
        and under the grading recursions.  Processed closures are recorded
        per pivot; back-substitution preserves the row span, so a closure
        image once absorbed stays absorbed and is never recomputed.
        Prepending only along existing edges keeps the registry from
        inventing words no computation ever asked for."""
        changed = False
        for slot in sorted(self.reducers):
            red = self.reducers[slot]
            for pivot in list(red.rows):
                state = self._closed.setdefault((slot, pivot), set())
                row = red.rows.get(pivot)
                if row is None:
                    continue
                if "grading" not in state:
                    state.add("grading")
                    for img in (self.l0_free(row), self.lm1_free(row),
                                self.nil_free(row)):
                        if img is not None and \
                                self._add_relation(self.reduce(img)):
                            changed = True
                    row = red.rows.get(pivot)
                    if row is None:
                        continue
                edges = set()
                for w in row.items:
                    edges |= self.parents.get(w, set())
                for (i, n) in sorted(edges - state):
                    state.add((i, n))
                    row = red.rows.get(pivot)
                    if row is None:
                        break
                    out = Vec()
                    for w, c in row.items.items():
                        res = self._prepend(w, i, n)
                        if res is None:
                            out = None
                            break
                        out = out + res.scale(c)
                    if out is not None and \
                            self._add_relation(self.reduce(out)):
                        changed = True
        return changed

    def _candidate_round(self):
        """Register one prepend layer over the current normal words, so the
        registry spans everything reachable by a single mode application."""
        before_words = len(self.words)
        for w in self.normal_words():
            if len(w.chain) + 1 > self.chain_cap:
                continue
            s = self.word_weight(w)
            for i in self.spec.indices():
                for n in self._prepend_exponents(i, s):
                    self._prepend(w, i, n)
        return len(self.words) != before_words

    # -- operators defined by recursion on words ----------------------------

    def l0_free(self, vec):
        spec = self.spec
        out = Vec()
        for w, c in vec.items.items():
            out = out + Vec.unit(w, Scalar.from_rational(self.word_weight(w))).scale(c)
            for t in range(len(w.chain)):
                i, n = w.chain[t]
                if spec.nil(i):
                    rep = _word(w.chain[:t] + ((spec.nil(i), n),) + w.chain[t + 1:],
                                w.seed, w.tail)
                    self._register(rep)
                    out = out + Vec.unit(rep, Scalar.from_rational(-1)).scale(c)
            nt = vc.nil_action(spec, w.tail)
            for u2, cu in nt.items.items():
                rep = _word(w.chain, w.seed, u2)
                if not self._is_lowerbound_unit_data(w.seed[0], w.seed[1], u2) \
                        or w.chain:
                    self._register(rep)
                    out = out + Vec.unit(rep, -Scalar.one() * cu).scale(c)
        return out

    def lm1_free(self, vec):
        """L(-1) on a free word vector; None when any term is truncated."""
        spec = self.spec
        out = Vec()
        for w, c in vec.items.items():
            if self.word_weight(w) + 1 > self.cutoff:
                return None
            pieces = []
            for t in range(len(w.chain)):
                i, n = w.chain[t]
                low = _word(w.chain[:t] + ((i, n - 1),) + w.chain[t + 1:],
                            w.seed, w.tail)
                pieces.append((low, Scalar.from_rational(-n)))
                if spec.nil(i):
                    rep = _word(w.chain[:t] + ((spec.nil(i), n - 1),) + w.chain[t + 1:],
                                w.seed, w.tail)
                    pieces.append((rep, Scalar.from_rational(-1)))
            a, n = w.seed
            low = _word(w.chain, (a, n - 1), w.tail)
            pieces.append((low, Scalar.from_rational(-n)))
            nt = vc.nil_action(spec, w.tail)
            for u2, cu in nt.items.items():
                pieces.append((_word(w.chain, (a, n - 1), u2), -Scalar.one() * cu))
            if vc.key_weight(spec, w.tail) + 1 > self.tail_cutoff:
                return None
            tv = vc.translation_op(spec, w.tail, self.tail_cutoff)
            for u2, cu in tv.items.items():
                pieces.append((_word(w.chain, w.seed, u2), cu))
            for rep, coeff in pieces:
                if not rep.chain and self._is_lowerbound_unit_data(
                        rep.seed[0], rep.seed[1], rep.tail):
                    continue
                if self.word_weight(rep) < self.lower_bound:
                    continue
                if not self._admissible(rep):
                    return None
                self._register(rep)
                out = out + Vec.unit(rep, coeff).scale(c)
        return out

    def nil_free(self, vec):
        spec = self.spec
        out = Vec()
        for w, c in vec.items.items():
            for t in range(len(w.chain)):
                i, n = w.chain[t]
                if spec.nil(i):
                    rep = _word(w.chain[:t] + ((spec.nil(i), n),) + w.chain[t + 1:],
                                w.seed, w.tail)
                    self._register(rep)
                    out = out + Vec.unit(rep).scale(c)
            for u2, cu in vc.nil_action(spec, w.tail).items.items():
                rep = _word(w.chain, w.seed, u2)
                if not rep.chain and self._is_lowerbound_unit_data(
                        rep.seed[0], rep.seed[1], u2):
                    continue
                self._register(rep)
                out = out + Vec.unit(rep, cu).scale(c)
        return out

    # -- reduced module interface -------------------------------------------

    def reduce(self, vec):
        if vec is None:
            return None
        out = Vec()
        by_slot = {}
        for w, c in vec.items.items():
            by_slot.setdefault(self._slot(w), {})[w] = c
        for slot, d in by_slot.items():
            sub = Vec(d)
            red = self.reducers.get(slot)
            out = out + (red.reduce(sub) if red is not None else sub)
        return out

    def normal_words(self):
        pivots = set()
        for red in self.reducers.values():
            pivots |= red.pivot_keys()
        return [w for w in sorted(self.words) if w not in pivots]

    def mode_action(self, i, n, k, vec):
        """(phi^i)_{n,k} on a reduced vector (truncating projection)."""
        spec = self.spec
        j = i
        for _ in range(k):
            j = spec.nil(j)
        if j == 0:
            return Vec()
        out = Vec()
        for w, c in vec.items.items():
            res = self._prepend(w, j, n)
            if res is None:
                res = Vec()   # truncated above the cutoff
            out = out + res.scale(c)
        return self.reduce(out).scale(Fraction((-1) ** k, factorial(k)))

    def psi_action(self, a, n, k, tail_vec):
        """(psi^a)_{n,k} applied to an algebra vector."""
        spec = self.spec
        comp = tail_vec
        for _ in range(k):
            comp = vc.nil_action_vec(spec, comp)
        out = Vec()
        for u, cu in comp.items.items():
            res = self._seed_word_vec(a, n, u)
            if res is None:
                res = Vec()
            out = out + res.scale(cu)
        return self.reduce(out).scale(Fraction((-1) ** k, factorial(k)))

    def l0(self, vec):
        return self.reduce(self.l0_free(vec))

    def lm1(self, vec):
        free = self.lm1_free(vec)
        return None if free is None else self.reduce(free)

    def nilop(self, vec):
        return self.reduce(self.nil_free(vec))

    def gclass_op(self, vec):
        out = Vec()
        for w, c in vec.items.items():
            out = out + Vec.unit(w, Scalar.root_of_unity(self.word_class(w))).scale(c)
        return out

    def g_action(self, vec):
        """e^{2 pi i (S + N)} with the tau-polynomial nilpotent exponential."""
        out = self.gclass_op(vec)
        extra = Vec()
        term = out
        k = 1
        while True:
            term = self.nilop(term)
            if term is None or term.is_zero():
                break
            extra = extra + term.scale(
                Scalar.tau(k) * Fraction(1, factorial(k)))
            k += 1
        return out + extra

    def character(self):
        """Slot dimensions: dict (weight, class) -> dim."""
        out = {}
        for w in self.normal_words():
            slot = self._slot(w)
            out[slot] = out.get(slot, 0) + 1
        return out

    def save_character(self, path):
        ch = self.character()
        lines = ["weight,class,dim"]
        for (wt, cls) in sorted(ch):
            lines.append("%s,%s,%d" % (wt, cls, ch[(wt, cls)]))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def rank(self):
        return sum(r.rank() for r in self.reducers.values())


# ---------------------------------------------------------------------------
# Two-variable scalar/word series helpers.  Keys are ((e1, k1), (e2, k2)).

def _bump(key, var, de, dk):
    (e1, k1), (e2, k2) = key
    if var == 0:
        return ((e1 + de, k1 + dk), (e2, k2))
    return ((e1, k1), (e2 + de, k2 + dk))


def _merge2(key1, ek2):
    (e1, k1), (e2, k2) = key1
    return ((e1, k1), (e2 + ek2[0], k2 + ek2[1]))


def _lift2(series1, var):
    """Lift a one-variable series dict (e,k)->Vec to two variables."""
    out = {}
    for (e, k), v in series1.items():
        if var == 0:
            out[((e, k), (Fraction(0), 0))] = v
        else:
            out[((Fraction(0), 0), (e, k))] = v
    return out


def _accumulate(target, part):
    for key, v in part.items():
        target.setdefault(key, Vec())
        target[key] = target[key] + v


def _scalar_one_series():
    return {((Fraction(0), 0), (Fraction(0), 0)): Scalar.one()}


def _scale_series(s, frac):
    c = Scalar.from_rational(frac)
    return {k: v * c for k, v in s.items()}


def _mul_scalar_series(a, b):
    out = {}
    for k1, c1 in a.items():
        for k2, c2 in b.items():
            key = _add_keys(k1, k2)
            out[key] = out.get(key, Scalar.zero()) + c1 * c2
    return {k: c for k, c in out.items() if not c.is_zero()}


def _add_keys(k1, k2):
    return tuple((e1 + e2, l1 + l2) for (e1, l1), (e2, l2) in zip(k1, k2))


def _mul2_scalar(scalar_series, word_series, poison):
    """Scalar 2-var series times word-vector 2-var series, with poison keys
    propagated through the convolution."""
    out = {}
    new_poison = set()
    for k1, c1 in scalar_series.items():
        for k2, v in word_series.items():
            key = _add_keys(k1, k2)
            out.setdefault(key, Vec())
            out[key] = out[key] + v.scale(c1)
        for pk in poison:
            new_poison.add(_add_keys(k1, pk))
    return {k: v for k, v in out.items() if not v.is_zero()}, new_poison


def _expand_A(r, region, jmax):
    """(x1 - x2)^r ("first") or (-x2 + x1)^r ("second") as a key dict."""
    from .series import binom
    out = {}
    r = Fraction(r)
    stop = jmax
    if r == int(r) and r >= 0:
        stop = min(jmax, int(r))
    for j in range(stop + 1):
        c = binom(r, j)
        if c == 0:
            continue
        if region == "first":
            key = ((r - j, 0), (Fraction(j), 0))
            out[key] = Scalar.from_rational(c * (-1) ** j)
        else:
            key = ((Fraction(j), 0), (r - j, 0))
            out[key] = Scalar.from_rational(c) * Scalar.e_pi_i(r - j)
    return out


def _expand_L(region, jmax):
    """log(x1 - x2) ("first") or log(-x2 + x1) ("second") as a key dict."""
    out = {}
    if region == "first":
        out[((Fraction(0), 1), (Fraction(0), 0))] = Scalar.one()
    else:
        out[((Fraction(0), 0), (Fraction(0), 1))] = Scalar.one()
        key0 = ((Fraction(0), 0), (Fraction(0), 0))
        out[key0] = Scalar.tau() * Fraction(1, 2)
    for j in range(1, jmax + 1):
        if region == "first":
            key = ((Fraction(-j), 0), (Fraction(j), 0))
        else:
            key = ((Fraction(j), 0), (Fraction(-j), 0))
        out[key] = out.get(key, Scalar.zero()) + \
            Scalar.from_rational(Fraction(-1, j))
    return out


def _floor(x):
    x = Fraction(x)
    return x.numerator // x.denominator


def _ceil(x):
    x = Fraction(x)
    return -((-x.numerator) // x.denominator)


def _ceil_diff(lo, offset):
    """Smallest integer m with offset + m >= lo."""
    return _ceil(Fraction(lo) - Fraction(offset))


# ---------------------------------------------------------------------------
# Induced maps out of the universal module.

def _as_scalar(c):
    if isinstance(c, (int, Fraction)):
        return Scalar.from_rational(c)
    return c


class InducedMap:
    """The module map out of a universal module determined by a seed map.

    The seed map f sends each seed label either to a ground vector of a
    truncated twisted Fock instance (a `Vec` over instance basis keys) or,
    when the target is another universal module over the same seed space,
    to a rational combination of target seed labels (a plain dict).  The
    induced map is forced on spanning words: a seed mode goes to the
    matching mode of the twist field attached to the image ground vector,
    and a chain mode goes to the matching generator mode of the target.

    Construction checks that f intertwines the weight, parity, class,
    nilpotent and exponential-twist operators (raising `NotEquivariant`)
    and then verifies that every quotient relation of the source is killed,
    so the map is well defined; `report` also records the image rank
    against the target dimension in every weight/class slot up to the
    cutoff.
    """

    def __init__(self, module, target, f):
        self.module = module
        self.target = target
        self._universal_target = isinstance(target, UniversalModule)
        if Fraction(target.cutoff) != module.cutoff or \
                Fraction(target.lower_bound) != module.lower_bound:
            raise ValueError("target must be truncated at the same window")
        self.f = f
        self._images = {}
        self._tf = {}
        if not self._universal_target:
            from . import twisted_vertex as tv
            for a, vec in f.items():
                if vec.items:
                    self._tf[a] = tv.TwistField(target, vec)
        self._check_equivariance()
        self.report = {"equivariant": True}
        self._check_relations()
        self._rank_report()

    # -- seed-level equivariance --------------------------------------------

    def _seed_image(self, a):
        if self._universal_target:
            return dict(self.f.get(a, {}))
        vec = self.f.get(a)
        return dict(vec.items) if vec is not None else {}

    def _fail(self, what, a):
        raise NotEquivariant("seed map does not intertwine %s at %r"
                             % (what, a))

    def _check_equivariance(self):
        seed = self.module.seed
        for a in seed.labels:
            img = self._seed_image(a)
            for key, _c in img.items():
                if self._universal_target:
                    tseed = self.target.seed
                    wt = tseed.weight[key]
                    par = tseed.parity[key]
                    cls = tseed.gclass[key]
                else:
                    wt = self.target.weight(key)
                    par = self.target.parity(key)
                    cls = self.target.gclass(key)
                if wt != seed.weight[a]:
                    self._fail("the weight grading", a)
                if par != seed.parity[a]:
                    self._fail("the parity", a)
                if cls % 1 != seed.gclass[a] % 1:
                    self._fail("the twist eigenvalue", a)
            # nilpotent part (drives both N and the log part of L(0))
            for op, name in ((seed.nil, "the nilpotent operator"),
                             (seed.l0_nil, "the grading log part")):
                lhs = Vec()
                for b, c in op.get(a, {}).items():
                    for key, cc in self._seed_image(b).items():
                        lhs = lhs + Vec.unit(key, _as_scalar(cc)).scale(
                            Fraction(c))
                rhs = self._seed_nil_target(img)
                if op is seed.l0_nil:
                    rhs = rhs.scale(Fraction(-1))
                if not (lhs - rhs).is_zero():
                    self._fail(name, a)

    def _seed_nil_target(self, img):
        vec = Vec()
        for key, c in img.items():
            vec = vec + Vec.unit(key, _as_scalar(c))
        if self._universal_target:
            tseed = self.target.seed
            out = Vec()
            for b, c in vec.items.items():
                for b2, cc in tseed.nil.get(b, {}).items():
                    out = out + Vec.unit(b2, c * Scalar.from_rational(cc))
            return out
        return self.target.nil(vec)

    # -- the forced word images ---------------------------------------------

    def image_of_word(self, w):
        vec = self._images.get(w)
        if vec is None:
            a, n = w.seed
            if self._universal_target:
                vec = Vec()
                for b, c in self._seed_image(a).items():
                    res = self.target._seed_word_vec(b, n, w.tail)
                    if res is None:
                        res = Vec()
                    vec = vec + res.scale(Fraction(c))
                vec = self.target.reduce(vec)
                for i, m in reversed(w.chain):
                    vec = self.target.mode_action(i, m, 0, vec)
            else:
                tf = self._tf.get(a)
                vec = tf.mode(w.tail, n, 0) if tf is not None else Vec()
                for i, m in reversed(w.chain):
                    vec = self.target.raw_mode_vec(i, m, vec)
            self._images[w] = vec
        return vec

    def apply(self, vec):
        out = Vec()
        for w, c in vec.items.items():
            out = out + self.image_of_word(w).scale(c)
        return out

    # -- verification --------------------------------------------------------

    def _check_relations(self):
        checked = killed = 0
        failure = None
        for red in self.module.reducers.values():
            for row in red.rows.values():
                checked += 1
                if self.apply(row).is_zero():
                    killed += 1
                elif failure is None:
                    failure = row
        self.report["relations"] = {"checked": checked, "killed": killed}
        self.report["well_defined"] = checked == killed
        if failure is not None:
            self.report["first_unkilled"] = repr(failure)

    def _rank_report(self):
        if self._universal_target:
            dims = self.target.character()
            slot = self.target._slot
        else:
            dims = self.target.character()
            slot = lambda b: (self.target.weight(b), self.target.gclass(b))
        reducers = {}
        for w in self.module.normal_words():
            img = self.image_of_word(w)
            by_slot = {}
            for b, c in img.items.items():
                by_slot.setdefault(slot(b), {})[b] = c
            for s, d in by_slot.items():
                reducers.setdefault(s, RowReducer()).add(Vec(d))
        slots = {}
        for s in sorted(dims):
            r = reducers[s].rank() if s in reducers else 0
            slots[str(s)] = {"rank": r, "dim": dims[s]}
        self.report["surjectivity"] = slots
        self.report["surjective"] = all(
            v["rank"] == v["dim"] for v in slots.values())

    def check_intertwining(self, samples=25):
        """Spot-check that the map commutes with the module structure: for
        sampled normal words and every in-window generator mode, mapping
        then acting equals acting then mapping.  This pins the map down:
        any module map agreeing with f on the seed layer satisfies the same
        recursion, so agreement here certifies uniqueness on the sample."""
        mod, tgt = self.module, self.target
        words = mod.normal_words()[:samples]
        checked = 0
        failure = None
        for w in words:
            wt = mod.word_weight(w)
            img = self.image_of_word(w)
            for i in mod.spec.indices():
                if self._universal_target:
                    ns = tgt._prepend_exponents(i, wt)
                else:
                    ns = tgt.exponents(i, wt)
                for n in ns:
                    lhs = self.apply(mod.mode_action(i, n, 0, Vec.unit(w)))
                    if self._universal_target:
                        rhs = tgt.mode_action(i, n, 0, img)
                    else:
                        rhs = tgt.phi_mode(i, n, 0, img)
                    checked += 1
                    if not (lhs - rhs).is_zero():
                        if failure is None:
                            failure = (w, i, n)
        out = {"checked": checked, "ok": failure is None}
        if failure is not None:
            out["first_failure"] = repr(failure)
        self.report["intertwining"] = out
        return out


def induced_map(module, target, f):
    """Build the module map out of `module` induced by the seed map f and
    return (map, report).  Raises NotEquivariant when f fails to commute
    with the seed-level structure."""
    fmap = InducedMap(module, target, f)
    return fmap, fmap.report
