"""Command-line front end: ``mpotrace run | bench | diagnose | oracle``.

Experiments are described by a versioned INI file. Every key has a typed
default; unknown sections or keys are rejected before anything is
computed. ``--set section.key=value`` (and the shortcut flags) override the
file in command-line order, the last assignment winning.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tt_core as tt
from .diagnostics import MonitorSettings, audit
from .krylov import (LanczosMode, SpectralFunction, StoppingCriteria, run_lanczos)
from .spin_hamiltonians import (Boundary, InteractionSpec, Term, build_hamiltonian,
                                construct_chiral_unitary, expected_couplings)
from .tt_core import CompressionSettings, NumericalFailure

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

BENCH_COLUMNS = ("mode", "L", "D_max", "repetition", "iterations", "mean_iter_ms",
                 "min_iter_ms", "saturated_mean_ms", "estimate", "max_bond")


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.replace(";", ",").split(",") if x.strip()]


def _str_list(s: str) -> list[str]:
    return [x.strip() for x in s.replace(";", ",").split(",") if x.strip()]


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    return str(v)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "config": {"version": (int, CONFIG_VERSION)},
    "model": {
        "type": (str, "tfim"),           # tfim | pauli
        "L": (int, 4),
        "boundary": (str, "open"),
        "J": (float, 1.0),
        "g": (float, 1.0),
        "terms": (str, ""),              # pauli: "axis:length:value, ..."
        "disorder": (float, 0.0),        # relative uniform noise on every coupling
    },
    "function": {
        "name": (str, "exp_neg_beta"),
        "beta": (float, 1.0),
        "p": (float, 2.0),
    },
    "run": {
        "mode": (str, "auto"),
        "max_iterations": (int, 100),
        "max_bond": (int, 50),
        "exact": (_bool, False),
        "svd_cutoff": (float, 1e-14),
        "max_sweeps": (int, 4),
        "sweep_tol": (float, 1e-8),
        "rel_change_tol": (float, 1e-6),
        "breakdown_tol": (float, 1e-12),
        "seed": (int, 0),
    },
    "output": {
        "directory": (str, "mpotrace_out"),
        "csv": (str, "iterations.csv"),
        "summary": (str, "summary.txt"),
        "checkpoint_every": (int, 0),
        "checkpoint_dir": (str, "checkpoint"),
    },
    "diagnostics": {
        "enabled": (_bool, True),
        "trace": (_bool, True),
        "alpha": (_bool, True),
        "commutation_every": (int, 5),
        "symmetry_every": (int, 5),
        "warn_tol": (float, 1e-6),
    },
    "bench": {
        "modes": (_str_list, ["vanilla", "chiral_fast"]),
        "lengths": (_int_list, [10, 20, 30, 40]),
        "max_bonds": (_int_list, [50]),
        "iterations": (int, 50),
        "repetitions": (int, 5),
        "csv": (str, "bench.csv"),
    },
}


@dataclass
class ExperimentConfig:
    """Typed view of an experiment INI file; ``values[section][key]``."""

    values: dict[str, dict] = field(default_factory=lambda: {
        s: {k: (list(d) if isinstance(d, list) else d) for k, (_, d) in keys.items()}
        for s, keys in SCHEMA.items()})

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    # -- parsing -------------------------------------------------------------

    @classmethod
    def parse(cls, text: str, overrides=()) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        cfg = cls()
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in cp.items(section):
                cfg.set(section, key, raw)
        for item in overrides:
            cfg.apply_override(item)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, overrides=()) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.parse(text, overrides)

    def set(self, section: str, key: str, raw: str) -> None:
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]; "
                              f"allowed: {', '.join(SCHEMA[section])}")
        parser = SCHEMA[section][key][0]
        try:
            self.values[section][key] = parser(raw.strip()) if isinstance(raw, str) else parser(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None

    def apply_override(self, item: str) -> None:
        lhs, sep, rhs = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        self.set(section, key, rhs)

    def serialize(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for section, keys in SCHEMA.items():
            cp[section] = {k: _fmt_value(self.values[section][k]) for k in keys}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    # -- validation and derived objects -------------------------------------

    def validate(self) -> None:
        if self["config"]["version"] != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self['config']['version']}")
        try:
            self.interaction_spec()
            self.spectral_function()
            LanczosMode.parse(self["run"]["mode"])
            self.compression()
            self.stopping()
            for m in self["bench"]["modes"]:
                LanczosMode.parse(m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        r, o, d, b = self["run"], self["output"], self["diagnostics"], self["bench"]
        checks = [
            (r["seed"] >= 0, "[run] seed must be >= 0"),
            (self["model"]["disorder"] >= 0, "[model] disorder must be >= 0"),
            (o["checkpoint_every"] >= 0, "[output] checkpoint_every must be >= 0"),
            (d["commutation_every"] >= 0 and d["symmetry_every"] >= 0,
             "[diagnostics] intervals must be >= 0"),
            (d["warn_tol"] > 0, "[diagnostics] warn_tol must be > 0"),
            (b["iterations"] >= 2, "[bench] iterations must be >= 2"),
            (b["repetitions"] >= 1, "[bench] repetitions must be >= 1"),
            (b["lengths"] and min(b["lengths"]) >= 2, "[bench] lengths must be >= 2"),
            (b["max_bonds"] and min(b["max_bonds"]) >= 1, "[bench] max_bonds must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def _term_list(self, L: int | None = None) -> list[tuple[str, int, float]]:
        m = self["model"]
        L = m["L"] if L is None else L
        kind = m["type"].strip().lower()
        if kind == "tfim":
            out = [("z", 1, m["g"])]
            if L >= 2:
                out.insert(0, ("x", 2, m["J"]))
            return out
        if kind != "pauli":
            raise ValueError(f"[model] type must be 'tfim' or 'pauli', got {m['type']!r}")
        out = []
        for item in _str_list(m["terms"]):
            parts = item.split(":")
            if len(parts) not in (2, 3):
                raise ValueError(f"[model] term {item!r} must be axis:length[:value]")
            out.append((parts[0].strip().lower(), int(parts[1]),
                        float(parts[2]) if len(parts) == 3 else 1.0))
        if not out:
            raise ValueError("[model] type 'pauli' needs at least one entry in terms")
        return out

    def interaction_spec(self, L: int | None = None) -> InteractionSpec:
        m = self["model"]
        L = m["L"] if L is None else L
        if L < 1:
            raise ValueError(f"[model] L must be >= 1, got {L}")
        boundary = Boundary(m["boundary"].strip().lower())
        rng = np.random.default_rng(self["run"]["seed"])
        terms = []
        for axis, length, value in self._term_list(L):
            if length < 1 or length > L:
                raise ValueError(f"[model] block length {length} of term {axis}:{length} "
                                 f"must lie in 1..L={L}")
            n = expected_couplings(length, L, boundary)
            c = np.full(n, value)
            if m["disorder"] > 0:
                c = c * (1.0 + m["disorder"] * rng.uniform(-1.0, 1.0, n))
            terms.append(Term(axis, length, tuple(float(x) for x in c)))
        return InteractionSpec(tuple(terms), L, boundary)

    def spectral_function(self) -> SpectralFunction:
        f = self["function"]
        return SpectralFunction.from_name(f["name"], beta=f["beta"], p=f["p"])

    def compression(self, max_bond: int | None = None) -> CompressionSettings:
        r = self["run"]
        if r["exact"]:
            return CompressionSettings.exact()
        return CompressionSettings(max_bond=r["max_bond"] if max_bond is None else max_bond,
                                   svd_cutoff=r["svd_cutoff"], max_sweeps=r["max_sweeps"],
                                   sweep_tol=r["sweep_tol"])

    def stopping(self) -> StoppingCriteria:
        r = self["run"]
        return StoppingCriteria(r["max_iterations"], r["rel_change_tol"], r["breakdown_tol"])

    def monitors(self) -> MonitorSettings | None:
        d = self["diagnostics"]
        if not d["enabled"]:
            return None
        return MonitorSettings(trace=d["trace"], alpha=d["alpha"],
                               commutation_every=d["commutation_every"],
                               symmetry_every=d["symmetry_every"], warn_tol=d["warn_tol"])


# --------------------------------------------------------------------------
# checkpoints


def write_checkpoint(directory, H: tt.TensorTrainOperator, basis: dict[int, tt.TensorTrainOperator],
                     jacobi, estimates, mode: str) -> None:
    """Directory with ``hamiltonian.ttop``, ``basis_XXXX.ttop`` and ``state.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if not (d / "hamiltonian.ttop").exists():
        tt.save(d / "hamiltonian.ttop", H)
    for i, U in basis.items():
        tt.save(d / f"basis_{i:04d}.ttop", U)
    state = {"iteration": len(jacobi.alphas), "beta1": jacobi.beta1, "alphas": list(jacobi.alphas),
             "betas": list(jacobi.betas), "estimates": list(estimates), "mode": mode}
    (d / "state.json").write_text(json.dumps(state, indent=1), encoding="utf-8")


def read_checkpoint(path):
    """Returns ``(H or None, {index: U}, state dict)``; ``ValueError`` on bad input."""
    p = Path(path)
    if p.is_file():
        return None, {0: tt.load(p)}, {}
    if not p.is_dir():
        raise ValueError(f"checkpoint {p} does not exist")
    ham = p / "hamiltonian.ttop"
    H = tt.load(ham) if ham.exists() else None
    basis = {}
    for f in sorted(p.glob("basis_*.ttop")):
        try:
            idx = int(f.stem.split("_", 1)[1])
        except ValueError:
            raise ValueError(f"unexpected basis file name {f.name}") from None
        basis[idx] = tt.load(f)
    state = {}
    if (p / "state.json").exists():
        try:
            state = json.loads((p / "state.json").read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"corrupt state.json: {exc}") from None
    if H is None and not basis:
        raise ValueError(f"checkpoint {p} contains no operators")
    return H, basis, state


# --------------------------------------------------------------------------
# commands


def cmd_run(cfg: ExperimentConfig, out=None) -> int:
    out = out or sys.stdout
    spec = cfg.interaction_spec()
    H = build_hamiltonian(spec)
    mode = LanczosMode.parse(cfg["run"]["mode"])
    witness = construct_chiral_unitary(spec) if mode is LanczosMode.AUTO else None
    odir = Path(cfg["output"]["directory"])
    odir.mkdir(parents=True, exist_ok=True)
    every = cfg["output"]["checkpoint_every"]
    ckpt_dir = odir / cfg["output"]["checkpoint_dir"]

    def callback(state):
        if every and state.iteration % every == 0:
            write_checkpoint(ckpt_dir, H, {state.iteration: state.u_curr}, state.jacobi,
                             state.estimates, mode.value)

    report = run_lanczos(H, cfg.spectral_function(), mode, cfg.compression(), cfg.stopping(),
                         witness=witness, monitors=cfg.monitors(), callback=callback)
    with open(odir / cfg["output"]["csv"], "w", encoding="utf-8", newline="") as fh:
        report.write_csv(fh)
    header = f"L: {spec.length}\nboundary: {spec.boundary.value}\n"
    summary = header + report.summary()
    (odir / cfg["output"]["summary"]).write_text(summary, encoding="utf-8")
    (odir / "config.ini").write_text(cfg.serialize(), encoding="utf-8")
    out.write(summary)
    return EXIT_OK


def saturated_mean_ms(report, max_bond: int) -> float | None:
    """Mean iteration time once the Krylov bond dimension has reached ``max_bond``."""
    idx = [i for i, b in enumerate(report.max_bonds) if b >= max_bond]
    if not idx or idx[0] + 1 >= len(report.wall_ms):
        return None
    return float(np.mean(report.wall_ms[idx[0] + 1:]))


def bench_rows(cfg: ExperimentConfig, modes=None, lengths=None, max_bonds=None,
               repetitions=None, iterations=None, progress=None) -> list[dict]:
    """Time every (mode, L, D_max, repetition) point sequentially.

    ``mean_iter_ms`` and ``min_iter_ms`` exclude iteration 1, whose cost is
    dominated by warm-up rather than the steady recurrence.
    """
    b = cfg["bench"]
    modes = [LanczosMode.parse(m) for m in (modes or b["modes"])]
    lengths = lengths or b["lengths"]
    max_bonds = max_bonds or b["max_bonds"]
    repetitions = repetitions or b["repetitions"]
    iterations = iterations or b["iterations"]
    f = cfg.spectral_function()
    # never stop on convergence; only breakdown may end a timing run early
    stop = StoppingCriteria(iterations, 1e-300, cfg["run"]["breakdown_tol"])
    rows = []
    for L in lengths:
        spec = cfg.interaction_spec(L)
        H = build_hamiltonian(spec)
        witness = construct_chiral_unitary(spec)
        for D in max_bonds:
            settings = cfg.compression(D)
            for rep in range(1, repetitions + 1):
                for mode in modes:
                    r = run_lanczos(H, f, mode, settings, stop, witness=witness, check_hermitian=False)
                    times = r.wall_ms[1:] or r.wall_ms
                    sat = saturated_mean_ms(r, D)
                    row = {"mode": r.mode_used.value, "L": L, "D_max": D, "repetition": rep,
                           "iterations": r.iterations, "mean_iter_ms": float(np.mean(times)),
                           "min_iter_ms": float(np.min(times)),
                           "saturated_mean_ms": "" if sat is None else sat,
                           "estimate": r.estimate, "max_bond": max(r.max_bonds)}
                    rows.append(row)
                    if progress is not None:
                        progress(row)
    return rows


def cmd_bench(cfg: ExperimentConfig, out=None) -> int:
    out = out or sys.stdout
    odir = Path(cfg["output"]["directory"])
    odir.mkdir(parents=True, exist_ok=True)
    path = odir / cfg["bench"]["csv"]

    def progress(row):
        out.write(f"{row['mode']:<12} L={row['L']:<4} D={row['D_max']:<4} rep={row['repetition']} "
                  f"mean={row['mean_iter_ms']:.2f} ms min={row['min_iter_ms']:.2f} ms\n")

    rows = bench_rows(cfg, progress=progress)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    out.write(f"wrote {path}\n")
    return EXIT_OK


def cmd_diagnose(checkpoint, out=None, csv_path=None) -> int:
    out = out or sys.stdout
    try:
        H, basis, state = read_checkpoint(checkpoint)
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: cannot load checkpoint {checkpoint}: {exc}\n")
        return EXIT_CONFIG
    if H is not None and not basis:
        basis = {0: H}
        H = None
    rows = audit(H, basis, state.get("alphas"), state.get("beta1"))
    if 0 in basis:
        out.write(f"dimension N = {basis[0].dim}\n")
    width = max(len(r[0]) for r in rows)
    lwidth = max(len(r[1]) for r in rows)
    for check, label, value in rows:
        out.write(f"{check:<{width}}  {label:<{lwidth}}  {value:.6e}\n")
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["check", "label", "value"])
            w.writerows([c, l, repr(float(v))] for c, l, v in rows)
    return EXIT_OK


def cmd_oracle(cfg: ExperimentConfig, out=None) -> int:
    out = out or sys.stdout
    from .oracle import DENSE_CAP, dense_global_lanczos, dense_hamiltonian, dense_trace_fn, lanczos_residual
    from .krylov import quadrature, assemble_jacobi

    spec = cfg.interaction_spec()
    if 2**spec.length > DENSE_CAP:
        raise ConfigError(f"oracle needs 2^L <= {DENSE_CAP}, got L={spec.length}")
    Hd = dense_hamiltonian(spec)
    f = cfg.spectral_function()
    exact = dense_trace_fn(Hd, f)
    K = cfg["run"]["max_iterations"]
    jac, basis = dense_global_lanczos(Hd, K, retain_all=True, breakdown_tol=cfg["run"]["breakdown_tol"])
    est = quadrature(assemble_jacobi(jac), jac.beta1, f)
    out.write(f"L: {spec.length}\n")
    out.write(f"dense_trace: {exact:.15g}\n")
    out.write(f"dense_lanczos_estimate: {est:.15g}\n")
    out.write(f"dense_lanczos_iterations: {len(jac.alphas)}\n")
    out.write(f"breakdown: {jac.betas[-1] == 0.0}\n")
    out.write(f"max_abs_alpha: {max(abs(a) for a in jac.alphas):.3e}\n")
    out.write(f"decomposition_residual: {lanczos_residual(Hd, basis, jac):.3e}\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


class _Override(argparse.Action):
    """Collect ``--set`` and shortcut flags into one ordered override list."""

    def __init__(self, option_strings, dest, key=None, **kw):
        self.key = key
        super().__init__(option_strings, dest, **kw)

    def __call__(self, parser, namespace, value, option_string=None):
        items = list(getattr(namespace, "overrides", None) or [])
        items.append(f"{self.key}={value}" if self.key else value)
        namespace.overrides = items


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="experiment INI file (defaults apply when omitted)")
    p.add_argument("--set", dest="overrides", action=_Override, metavar="SECTION.KEY=VALUE",
                   help="override one config key; repeatable, last wins")
    p.add_argument("-L", dest="overrides", action=_Override, key="model.L", help="chain length")
    p.add_argument("--mode", dest="overrides", action=_Override, key="run.mode",
                   help="vanilla | chiral_fast | chiral_safe | auto")
    p.add_argument("--max-bond", dest="overrides", action=_Override, key="run.max_bond",
                   help="bond dimension cap D_max")
    p.add_argument("--out", dest="overrides", action=_Override, key="output.directory",
                   help="output directory")
    p.add_argument("--print-config", action="store_true", help="print the effective config and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpotrace", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, hlp in (("run", "estimate Tr f(H) and write per-iteration CSV"),
                      ("bench", "time vanilla vs chiral iterations over an (L, D_max) grid"),
                      ("oracle", "dense reference values (2^L <= 4096)")):
        _add_config_args(sub.add_parser(name, help=hlp))
    p = sub.add_parser("diagnose", help="audit a checkpoint directory or a .ttop file")
    p.add_argument("checkpoint")
    p.add_argument("--csv", help="also write the residual table as CSV")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "diagnose":
        return cmd_diagnose(args.checkpoint, csv_path=args.csv)
    try:
        overrides = getattr(args, "overrides", None) or []
        cfg = (ExperimentConfig.from_file(args.config, overrides) if args.config
               else ExperimentConfig.parse("", overrides))
        if args.print_config:
            sys.stdout.write(cfg.serialize())
            return EXIT_OK
        cmd = {"run": cmd_run, "bench": cmd_bench, "oracle": cmd_oracle}[args.command]
        return cmd(cfg)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except (NumericalFailure, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
