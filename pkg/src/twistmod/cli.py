"""Command-line front end: build universal modules, export characters,
run verification suites, and construct induced maps onto explicit targets.

All outputs are byte-deterministic for a fixed configuration: iteration
orders are sorted, reports carry a schema version, and failures exit
nonzero with a machine-readable error record on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from . import voa_core as vc
from . import twisted_vertex as tv
from .linalg import Vec
from .universal_module import (SeedSpace, UniversalModule, load_seed,
                               induced_map, NotEquivariant)

_SCHEMA = 1
_JOBS_ENV = "TWISTMOD_JOBS"


@dataclasses.dataclass
class RunConfig:
    command: str
    algebra: str
    seed: str | None = None
    cutoff: Fraction = Fraction(4)
    lower_bound: Fraction = Fraction(0)
    branch: int = 0
    jobs: int = 1
    out: str = "."
    chain_cap: int | None = None
    duality_weight: int = 3

    def validate(self):
        if self.command not in ("build", "character", "verify", "map"):
            raise UsageError("unknown command %r" % self.command)
        if self.cutoff < self.lower_bound:
            raise UsageError("cutoff %s is below the lower bound %s"
                             % (self.cutoff, self.lower_bound))
        if self.jobs < 1:
            raise UsageError("jobs must be positive")
        return self


class UsageError(ValueError):
    pass


def _load_spec(cfg):
    return vc.load_algebra(cfg.algebra)


def _load_seed(cfg):
    if cfg.seed is None:
        return SeedSpace.single()
    return load_seed(cfg.seed)


def _build_universal(cfg, spec, seed):
    um = UniversalModule(spec, seed, cfg.cutoff, lower_bound=cfg.lower_bound,
                         chain_cap=cfg.chain_cap)
    um.build_quotient()
    return um


def _explicit_target(spec, cutoff):
    """The explicit Fock realization matching the twist: twisted when any
    generator sits in a fractional exponent class, regular otherwise."""
    if any(spec.gen(i).gweight % 1 != 0 for i in spec.indices()):
        return tv.twisted_fock_module(spec, cutoff)
    return tv.regular_module(spec, cutoff)


def _character_lines(name, slots):
    lines = ["schema = %d" % _SCHEMA, "module = %s" % name,
             "weight,class,dim"]
    for (wt, cls) in sorted(slots):
        lines.append("%s,%s,%d" % (wt, cls, slots[(wt, cls)]))
    return lines


def _write(cfg, fname, lines):
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, fname)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _header(cfg, spec):
    return ["schema = %d" % _SCHEMA,
            "command = %s" % cfg.command,
            "algebra = %s" % spec.name,
            "cutoff = %s" % cfg.cutoff,
            "lower_bound = %s" % cfg.lower_bound,
            "branch = %d" % cfg.branch]


def _cmd_build(cfg):
    spec = _load_spec(cfg)
    um = _build_universal(cfg, spec, _load_seed(cfg))
    lines = _header(cfg, spec)
    lines += ["chain_cap = %d" % um.chain_cap,
              "words = %d" % len(um.words),
              "relations = %d" % um.rank(),
              "[character]"]
    lines += _character_lines("universal(%s)" % spec.name,
                              um.character())[2:]
    path = _write(cfg, "build.txt", lines)
    return 0, [path]


def _cmd_character(cfg):
    spec = _load_spec(cfg)
    um = _build_universal(cfg, spec, _load_seed(cfg))
    path = _write(cfg, "character.csv",
                  _character_lines("universal(%s)" % spec.name,
                                   um.character()))
    return 0, [path]


def _report_lines(name, report, indent=""):
    lines = []
    for key in sorted(report):
        val = report[key]
        if isinstance(val, dict):
            lines.append("%s[%s.%s]" % (indent, name, key))
            lines += _report_lines("%s.%s" % (name, key), val, indent)
        else:
            lines.append("%s%s.%s = %s" % (indent, name, key, val))
    return lines


def _cmd_verify(cfg):
    spec = _load_spec(cfg)
    mod = tv.ModuleInstance(spec, cfg.cutoff, lower_bound=cfg.lower_bound)
    checks = [
        ("automorphism", lambda: vc.check_automorphism(spec, cfg.cutoff)),
        ("identity", lambda: tv.check_identity(mod)),
        ("phi_weak_commutativity", lambda: tv.check_phi_weak_comm(mod)),
        ("l_commutators", lambda: tv.check_l_commutators(mod)),
        ("duality", lambda: tv.check_duality(mod, cfg.duality_weight)),
        ("psi_weak_commutativity", lambda: tv.check_psi_weak_comm(mod)),
        ("monodromy", lambda: tv.monodromy_check(mod)),
    ]
    # independent checks may run in parallel; aggregation order is fixed
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        futures = [(name, pool.submit(fn)) for name, fn in checks]
        results = [(name, fut.result()) for name, fut in futures]
    ok = all(r.get("ok") for _n, r in results)
    lines = _header(cfg, spec) + ["ok = %s" % ok]
    for name, rep in results:
        lines += _report_lines(name, rep)
    path = _write(cfg, "verify.txt", lines)
    return (0 if ok else 1), [path]


def _cmd_map(cfg):
    spec = _load_spec(cfg)
    seed = _load_seed(cfg)
    if len(seed.labels) != 1:
        raise UsageError("map requires a single-label seed (the ground "
                         "vector of the explicit target)")
    um = _build_universal(cfg, spec, seed)
    target = _explicit_target(spec, cfg.cutoff)
    fmap, report = induced_map(um, target,
                               {seed.labels[0]: Vec.unit(())})
    fmap.check_intertwining()
    lines = _header(cfg, spec) + ["target = %s" % target.name]
    lines += _report_lines("induced_map", report)
    path = _write(cfg, "map.txt", lines)
    ok = (report.get("well_defined") and report.get("surjective")
          and report.get("intertwining", {}).get("ok"))
    return (0 if ok else 1), [path]


_COMMANDS = {"build": _cmd_build, "character": _cmd_character,
             "verify": _cmd_verify, "map": _cmd_map}


def run(config):
    """Execute a validated RunConfig; returns (exit status, artifact list)."""
    config.validate()
    return _COMMANDS[config.command](config)


def _parser():
    p = argparse.ArgumentParser(
        prog="twistmod",
        description="exact engine for lower-bounded twisted modules")
    p.add_argument("command", choices=sorted(_COMMANDS))
    p.add_argument("--algebra", required=True,
                   help="algebra spec path or built-in name (%s)"
                        % ", ".join(vc.BUILTIN_NAMES))
    p.add_argument("--seed", default=None, help="seed space file")
    p.add_argument("--cutoff", default="4", help="weight truncation (rational)")
    p.add_argument("--lower-bound", default="0", help="lowest module weight")
    p.add_argument("--branch", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel checks (env %s overrides)" % _JOBS_ENV)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--chain-cap", type=int, default=None,
                   help="cap on generator-mode chain length")
    p.add_argument("--duality-weight", type=int, default=3,
                   help="total-weight budget of the duality sweep in verify")
    return p


def _config(argv):
    ns = _parser().parse_args(argv)
    jobs = ns.jobs
    env = os.environ.get(_JOBS_ENV)
    if env is not None:
        jobs = int(env)
    return RunConfig(command=ns.command, algebra=ns.algebra, seed=ns.seed,
                     cutoff=Fraction(ns.cutoff),
                     lower_bound=Fraction(ns.lower_bound),
                     branch=ns.branch, jobs=jobs, out=ns.out,
                     chain_cap=ns.chain_cap,
                     duality_weight=ns.duality_weight)


def main(argv=None):
    try:
        cfg = _config(argv if argv is not None else sys.argv[1:])
        status, artifacts = run(cfg)
    except SystemExit:
        raise
    except (UsageError, NotEquivariant, OSError, KeyError, ValueError) as e:
        record = {"schema": _SCHEMA, "error": type(e).__name__,
                  "message": str(e)}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 2
    for a in artifacts:
        print(a)
    return status


if __name__ == "__main__":
    sys.exit(main())
