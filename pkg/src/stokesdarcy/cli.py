"""Command line driver: ``run``, ``convergence`` and ``check``.

Exit status is 0 on success, 1 for invalid configuration and 2 for a
numerical failure (solver breakdown or a failed property check).

Configuration is layered: preset, then an optional flat ``key = value`` file,
then command line flags. The output directory defaults to ``results`` and can
be overridden with the ``STOKESDARCY_OUTPUT_DIR`` environment variable or
``--out``.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .analysis import ConvergenceRecord, emit_table
from .forms import HydraulicTensor, PhysicalParams, assemble_operators, build_spaces
from .linalg import SingularMatrixError
from .mesh import build_structured
from .mms import ManufacturedSolution, interface_residuals
from .timestep import SCHEMES, STARTERS, SchemeConfig, SteppingError, TimeGrid, run

log = logging.getLogger("stokesdarcy")

OUTPUT_ENV = "STOKESDARCY_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

_BASE = dict(nu=0.1, eta=1e-2, rho=1e3, g=10.0, S0=1e-3, alpha=1.0, k1=1.0, k2=1e-2,
             theta=0.0, T=1.0)
PRESETS: Dict[str, Dict[str, float]] = {
    "test1": dict(_BASE),
    "test2": dict(_BASE, S0=1e-7),
    "test3": dict(_BASE, S0=1e-10, eta=0.1),
    "custom": dict(_BASE),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    test: str = "test1"
    nu: float = 0.1
    eta: float = 1e-2
    rho: float = 1e3
    g: float = 10.0
    S0: float = 1e-3
    alpha: float = 1.0
    k1: float = 1.0
    k2: float = 1e-2
    theta: float = 0.0
    n: int = 4
    sigma: float = 2.0 ** -6
    T: float = 1.0
    scheme: str = "bdf2"
    pressure: str = "q1"
    starter: str = "taylor"
    interface_forcing: bool = True
    zero_mean_pressure: bool = True
    output_dir: str = "results"

    @classmethod
    def preset(cls, name: str) -> "RunConfig":
        if name not in PRESETS:
            raise ConfigError(f"test: unknown preset {name!r} (choose from {', '.join(PRESETS)})")
        return cls(test=name, **PRESETS[name])

    def update(self, values: Dict[str, object]) -> "RunConfig":
        types = {f.name: f.type for f in fields(self)}
        out = dataclasses.replace(self)
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"{key}: unknown configuration key")
            setattr(out, key, _coerce(key, raw, types[key]))
        return out

    def validate(self) -> "RunConfig":
        for key in ("nu", "eta", "rho", "g", "S0", "alpha", "k1", "k2", "sigma", "T"):
            v = getattr(self, key)
            if not (v == v and v > 0 and v != float("inf")):
                raise ConfigError(f"{key}: must be strictly positive and finite, got {v!r}")
        if self.n < 1:
            raise ConfigError(f"n: must be a positive integer, got {self.n}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme: expected one of {SCHEMES}, got {self.scheme!r}")
        if self.starter not in STARTERS:
            raise ConfigError(f"starter: expected one of {STARTERS}, got {self.starter!r}")
        if self.pressure not in ("q1", "q1q0"):
            raise ConfigError(f"pressure: expected q1 or q1q0, got {self.pressure!r}")
        steps = self.T / self.sigma
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"sigma: T={self.T} is not a whole number of steps of {self.sigma}")
        if self.scheme == "bdf2" and round(steps) < 2:
            raise ConfigError("sigma: the three-level scheme needs at least two steps")
        return self

    def dump(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n".replace("'", "")
                       for f in fields(self))

    # -- derived objects -------------------------------------------------------
    @property
    def params(self) -> PhysicalParams:
        return PhysicalParams(self.nu, self.eta, self.rho, self.g, self.S0, self.alpha)

    @property
    def tensor(self) -> HydraulicTensor:
        return HydraulicTensor(self.k1, self.k2, self.theta)

    @property
    def scheme_config(self) -> SchemeConfig:
        return SchemeConfig(self.scheme, self.starter, self.interface_forcing)


def _coerce(key, raw, typ):
    typ = typ if isinstance(typ, str) else typ.__name__
    try:
        if typ == "bool":
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            f = float(raw)
            if f != int(f):
                raise ValueError(raw)
            return int(f)
        if typ == "float":
            return float(raw)
        return str(raw).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ}") from None


def read_config_file(path) -> Dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def output_dir(cfg: RunConfig, flag: Optional[str]) -> Path:
    if flag:
        return Path(flag)
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)


# ------------------------------------------------------------------ drivers

def simulate(cfg: RunConfig):
    """Build everything for ``cfg`` and run one simulation."""
    spaces = build_spaces(build_structured(n=cfg.n), cfg.pressure,
                          zero_mean_pressure=cfg.zero_mean_pressure)
    ops = assemble_operators(spaces, cfg.params, cfg.tensor)
    sol = ManufacturedSolution(cfg.params, cfg.tensor)
    grid = TimeGrid.from_sigma(cfg.T, cfg.sigma)
    return run(ops, sol, grid, cfg.scheme_config)


def run_convergence(cfg: RunConfig, vary: str, levels: Sequence[int]) -> List[ConvergenceRecord]:
    """Sweep ``h = 2^-l`` (``vary="h"``) or ``sigma = 2^-l`` over ``levels``."""
    if vary not in ("h", "sigma"):
        raise ConfigError(f"vary: expected h or sigma, got {vary!r}")
    levels = list(levels)
    if len(levels) < 2:
        raise ConfigError("levels: a convergence study needs at least two levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("levels: exponents must be strictly increasing")
    records = []
    for lvl in levels:
        over = {"n": 2 ** lvl} if vary == "h" else {"sigma": 2.0 ** -lvl}
        c = cfg.update(over).validate()
        res = simulate(c)
        records.append(ConvergenceRecord(2.0 ** -lvl, res.norm_w_exact, res.norm_w_h,
                                         res.max_err_w, res.max_err_p, res.cpu_s))
        log.info("level %d done: err_w=%.4e err_p=%.4e", lvl, res.max_err_w, res.max_err_p)
    return records


# ------------------------------------------------------------------ commands

def _fmt(x: float) -> str:
    return f"{x:.6g}"


def cmd_run(cfg: RunConfig, out: Path) -> int:
    res = simulate(cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"run_{cfg.test}_n{cfg.n}_sigma{_fmt(cfg.sigma)}_{cfg.scheme}.csv"
    path.write_text(res.csv())
    r_force, r_bjs, r_mass = interface_residuals(ManufacturedSolution(cfg.params, cfg.tensor), cfg.T)
    print(f"test={cfg.test} scheme={cfg.scheme} h=1/{cfg.n} sigma={_fmt(cfg.sigma)} "
          f"N={res.grid.N} err_w={res.max_err_w:.6e} err_p={res.max_err_p:.6e} "
          f"div={res.max_div_residual:.1e} cpu_s={res.cpu_s:.3f} csv={path}")
    print(f"interface defects at T: force={r_force:.3e} bjs={r_bjs:.3e} mass={r_mass:.3e}")
    return EXIT_OK


def cmd_convergence(cfg: RunConfig, vary: str, levels: Sequence[int], out: Path,
                    timing: bool = True) -> int:
    records = run_convergence(cfg, vary, levels)
    text = emit_table(records, timing=timing)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"table_{cfg.test}_{vary}.csv"
    path.write_text(text)
    sys.stdout.write(text)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_check(names=None) -> int:
    from .checks import run_checks

    results = run_checks(names=names)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} properties passed")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


# ------------------------------------------------------------------ argparse

_FLAG_KEYS = ("nu", "eta", "rho", "g", "S0", "alpha", "k1", "k2", "theta", "n", "sigma", "T",
              "scheme", "pressure", "starter")


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (status 1), not numerical ones."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stokesdarcy", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--test", default="test1", help="preset: test1, test2, test3 or custom")
        sp.add_argument("--config", help="flat key = value file applied after the preset")
        sp.add_argument("--out", help=f"output directory (overrides ${OUTPUT_ENV})")
        sp.add_argument("--dump-config", action="store_true",
                        help="print the resolved configuration and exit")
        for key in _FLAG_KEYS:
            sp.add_argument(f"--{key}", dest=key, default=None)
        sp.add_argument("--interface-forcing", dest="interface_forcing",
                        action=argparse.BooleanOptionalAction, default=None)
        sp.add_argument("--zero-mean-pressure", dest="zero_mean_pressure",
                        action=argparse.BooleanOptionalAction, default=None)

    common(sub.add_parser("run", help="one simulation with per-step diagnostics"))
    conv = sub.add_parser("convergence", help="refinement sweep in h or sigma")
    common(conv)
    conv.add_argument("--vary", choices=("h", "sigma"), required=True)
    conv.add_argument("--levels", type=int, nargs="+",
                      help="exponents l of 2^-l (default 2..5 for h, 4..7 for sigma)")
    conv.add_argument("--no-timing", action="store_true", help="leave the cpu_s column blank")
    chk = sub.add_parser("check", help="run the structural property suite")
    chk.add_argument("names", nargs="*", help="restrict to these checks")
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.preset(args.test)
    if getattr(args, "command", None) == "convergence":
        # the fixed parameter of a sweep defaults to the table captions
        cfg = cfg.update({"n": 32} if args.vary == "sigma" else {"sigma": 2.0 ** -6})
    if args.config:
        try:
            cfg = cfg.update(read_config_file(args.config))
        except OSError as exc:
            raise ConfigError(f"config: {exc}") from None
    flags = {k: getattr(args, k) for k in _FLAG_KEYS + ("interface_forcing", "zero_mean_pressure")
             if getattr(args, k, None) is not None}
    return cfg.update(flags).validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "check":
            return cmd_check(args.names or None)
        cfg = resolve_config(args)
        if args.dump_config:
            sys.stdout.write(cfg.dump())
            return EXIT_OK
        out = output_dir(cfg, args.out)
        if args.command == "run":
            return cmd_run(cfg, out)
        levels = args.levels or ([2, 3, 4, 5] if args.vary == "h" else [4, 5, 6, 7])
        return cmd_convergence(cfg, args.vary, levels, out, timing=not args.no_timing)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SteppingError, SingularMatrixError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
