"""Command line driver: SNR sweeps, invariant checks and single-point dumps.

Config files are flat ``key = value`` lines; ``#`` starts a comment.  Keys:

    preset          symmetric | asymmetric   (sets omega1, omega2)
    omega1, omega2  mean channel gains
    r0              rate in bits/symbol
    gamma_db        start, stop, step        (e.g. ``0, 40, 5``)
    backends        comma list of analytical, simulation, asymptotic,
                    baseline-conventional, baseline-buffered
    policies        comma list of delay, throughput
    thresholds      l1_thr, l2_thr
    caps            l1_max, l2_max
    n_slots, warmup_slots, seed, workers
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .asymptotics import high_snr_delay_efficient, high_snr_throughput_efficient
from .channel import LinkConfig, db_to_linear, region_probs_exact
from .markov import (ChainError, NumericalBreakdown, build_generic, build_prop1, build_te_min,
                     evaluate, lemma1_min_delays, residual)
from .policy import PolicyKind, Thresholds
from .simulator import BaselineKind, SimConfig, run, run_baseline

BACKENDS = ("analytical", "simulation", "asymptotic", "baseline-conventional", "baseline-buffered")
PRESETS = {"symmetric": (1.0, 1.0), "asymmetric": (0.25, 1.0)}
METRIC_COLUMNS = ("r12", "r21", "r_sum", "f12", "f21", "f_sys",
                  "q1_bar", "q2_bar", "t1_bar", "t2_bar", "t_sys")
COLUMNS = (("gamma_db", "backend", "policy", "l1_thr", "l2_thr", "l1_max", "l2_max")
           + METRIC_COLUMNS + ("seed", "status"))

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class SweepSpec:
    omega1: float = 1.0
    omega2: float = 1.0
    r0: float = 1.0
    gamma_db: tuple[float, float, float] = (0.0, 40.0, 5.0)
    backends: tuple[str, ...] = ("analytical",)
    policies: tuple[PolicyKind, ...] = (PolicyKind.DELAY_EFFICIENT, PolicyKind.THROUGHPUT_EFFICIENT)
    thresholds: Thresholds = Thresholds(0, 0)
    caps: tuple[int, int] = (10, 10)
    n_slots: int = 100_000
    warmup_slots: int = 1000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        start, stop, step = self.gamma_db
        if not step > 0:
            raise ConfigError("gamma_db", "step must be positive")
        if start > stop:
            raise ConfigError("gamma_db", "start must not exceed stop")
        if not self.backends:
            raise ConfigError("backends", "need at least one backend")
        if not self.policies:
            raise ConfigError("policies", "need at least one policy")
        if self.workers < 1:
            raise ConfigError("workers", "must be at least 1")
        try:
            LinkConfig(self.omega1, self.omega2, 1.0, self.r0)
        except ValueError as e:
            raise ConfigError("omega1/omega2/r0", str(e)) from None
        if min(self.caps) < 1:
            raise ConfigError("caps", "buffer capacities must be at least 1")
        try:
            self.thresholds.check_caps(self.caps)
        except ValueError as e:
            raise ConfigError("thresholds", str(e)) from None
        if self.n_slots <= self.warmup_slots:
            raise ConfigError("n_slots", "must exceed warmup_slots")

    def gammas_db(self) -> list[float]:
        start, stop, step = self.gamma_db
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(n)]

    def link(self, gamma_db: float) -> LinkConfig:
        return LinkConfig(self.omega1, self.omega2, db_to_linear(gamma_db), self.r0)


# -- config parsing ---------------------------------------------------------------

def _floats(key, value, n):
    try:
        out = tuple(float(v) for v in value.split(","))
    except ValueError:
        raise ConfigError(key, f"expected {n} comma-separated numbers, got {value!r}") from None
    if len(out) != n:
        raise ConfigError(key, f"expected {n} comma-separated numbers, got {value!r}")
    return out


def _ints(key, value, n):
    vals = _floats(key, value, n)
    if any(v != int(v) for v in vals):
        raise ConfigError(key, f"expected integers, got {value!r}")
    return tuple(int(v) for v in vals)


def _policies(key, value):
    try:
        return tuple(PolicyKind(v.strip()) for v in value.split(",") if v.strip())
    except ValueError:
        raise ConfigError(key, f"unknown policy in {value!r}; use delay, throughput") from None


def _backends(key, value):
    names = tuple(v.strip() for v in value.split(",") if v.strip())
    bad = [v for v in names if v not in BACKENDS]
    if bad:
        raise ConfigError(key, f"unknown backend {bad[0]!r}")
    return names


_PARSERS = {
    "omega1": lambda k, v: _floats(k, v, 1)[0],
    "omega2": lambda k, v: _floats(k, v, 1)[0],
    "r0": lambda k, v: _floats(k, v, 1)[0],
    "gamma_db": lambda k, v: _floats(k, v, 3),
    "backends": _backends,
    "policies": _policies,
    "thresholds": lambda k, v: Thresholds(*_ints(k, v, 2)),
    "caps": lambda k, v: _ints(k, v, 2),
    "n_slots": lambda k, v: _ints(k, v, 1)[0],
    "warmup_slots": lambda k, v: _ints(k, v, 1)[0],
    "seed": lambda k, v: _ints(k, v, 1)[0],
    "workers": lambda k, v: _ints(k, v, 1)[0],
}


def parse_config(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "preset":
            if value not in PRESETS:
                raise ConfigError(key, f"unknown preset {value!r}")
            values["omega1"], values["omega2"] = PRESETS[value]
            continue
        if key not in _PARSERS:
            raise ConfigError(key, "unknown key")
        try:
            values[key] = _PARSERS[key](key, value)
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(key, str(e)) from None
    return values


def load_spec(path: str | None, **overrides) -> SweepSpec:
    values = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values = parse_config(fh.read())
        except OSError as e:
            raise ConfigError("config", f"cannot read {path}: {e.strerror}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SweepSpec(**values)


# -- sweep ----------------------------------------------------------------------

@dataclass(frozen=True)
class Job:
    gamma_db: float
    backend: str
    policy: PolicyKind | None


def _jobs(spec: SweepSpec) -> list[Job]:
    jobs = []
    for g in spec.gammas_db():
        for backend in spec.backends:
            if backend.startswith("baseline"):
                jobs.append(Job(g, backend, None))
            else:
                jobs.extend(Job(g, backend, kind) for kind in spec.policies)
    return jobs


def _asymptotic(c: LinkConfig, kind: PolicyKind, caps) -> dict:
    a = (high_snr_delay_efficient(c) if kind is PolicyKind.DELAY_EFFICIENT
         else high_snr_throughput_efficient(c, caps))
    half = c.r0 / 2
    f12, f21 = a.f12(c.gamma), a.f21(c.gamma)
    return {"r12": half * (1 - f12), "r21": half * (1 - f21),
            "r_sum": half * (2 - f12 - f21), "f12": f12, "f21": f21, "f_sys": a.f_sys(c.gamma),
            "q1_bar": math.nan, "q2_bar": math.nan,
            "t1_bar": a.t1_bar, "t2_bar": a.t2_bar, "t_sys": a.t_sys}


def _evaluate(spec: SweepSpec, job: Job) -> dict:
    c = spec.link(job.gamma_db)
    if job.backend == "analytical":
        return evaluate(c, spec.thresholds, spec.caps, job.policy).metrics.as_dict()
    if job.backend == "asymptotic":
        return _asymptotic(c, job.policy, spec.caps)
    cfg = SimConfig(c, spec.thresholds, spec.caps, job.policy or PolicyKind.DELAY_EFFICIENT,
                    spec.n_slots, spec.seed, spec.warmup_slots)
    if job.backend == "simulation":
        return run(cfg).metrics.as_dict()
    if job.backend == "baseline-conventional":
        return run_baseline(BaselineKind.MABC_CONVENTIONAL, cfg).metrics.as_dict()
    n = cfg.n_slots - cfg.n_slots % 2
    return run_baseline(BaselineKind.MABC_BUFFERED, replace(cfg, n_slots=n, warmup_slots=0)).metrics.as_dict()


def run_row(args: tuple[SweepSpec, Job]) -> dict:
    spec, job = args
    row = {"gamma_db": job.gamma_db, "backend": job.backend,
           "policy": job.policy.value if job.policy else "none",
           "l1_thr": spec.thresholds.l1_thr, "l2_thr": spec.thresholds.l2_thr,
           "l1_max": spec.caps[0], "l2_max": spec.caps[1],
           "seed": spec.seed if job.backend in ("simulation",) or job.backend.startswith("baseline") else "",
           "status": "ok"}
    try:
        row.update(_evaluate(spec, job))
    except (ChainError, NumericalBreakdown) as e:
        row["status"] = f"error: {e}"
    except ValueError as e:
        row["status"] = f"out-of-scope: {e}"
    return row


def run_sweep(spec: SweepSpec) -> list[dict]:
    """Rows in sweep order (gamma, then backend, then policy)."""
    tasks = [(spec, job) for job in _jobs(spec)]
    if spec.workers == 1:
        return [run_row(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=spec.workers) as pool:
        return list(pool.map(run_row, tasks))


def _cell(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g") if math.isfinite(value) else "undefined"
    return str(value)


def write_csv(rows: list[dict], seed: int, out) -> None:
    out.write(f"# bufrelay {__version__} seed={seed}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow(_cell(row.get(col, math.nan)) for col in COLUMNS)


def render_csv(rows: list[dict], seed: int) -> str:
    buf = io.StringIO()
    write_csv(rows, seed, buf)
    return buf.getvalue()


# -- validate ----------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str
    warning: bool = False


def _zero_structure_ok(tm) -> bool:
    states = tm.space.states
    for col, (a1, a2) in enumerate(states):
        for row in np.flatnonzero(tm.m[:, col]):
            b1, b2 = states[row]
            d1, d2 = b1 - a1, b2 - a2
            if abs(d1) > 1 or abs(d2) > 1 or d1 * d2 < 0:
                return False
    return True


def validate(spec: SweepSpec) -> list[Check]:
    checks = []
    t, caps = spec.thresholds, spec.caps
    for g in spec.gammas_db():
        c = spec.link(g)
        probs = region_probs_exact(c)
        for kind in spec.policies:
            tag = f"gamma={g:g}dB {kind.value}"
            full = build_generic(probs, t, caps, kind)
            cols = np.abs(full.m.sum(axis=0) - 1).max()
            checks.append(Check(f"{tag} column sums", cols < 1e-12, f"max |1 - sum| = {cols:.2e}"))
            checks.append(Check(f"{tag} one-step moves", _zero_structure_ok(full), "Δl in {-1,0,1}, same sign"))
            if kind is PolicyKind.DELAY_EFFICIENT:
                d = np.abs(build_prop1(probs, t, caps).m - full.m).max()
                checks.append(Check(f"{tag} closed form", d < 1e-12, f"max |Δ| = {d:.2e}"))
            elif t == Thresholds(0, 0):
                d = np.abs(build_te_min(probs, caps).m - full.m).max()
                checks.append(Check(f"{tag} closed form", d < 1e-12, f"max |Δ| = {d:.2e}"))
            try:
                res = evaluate(c, t, caps, kind, probs)
            except ChainError as e:
                checks.append(Check(f"{tag} stationary", False, str(e)))
                continue
            stay = 1.0 - np.diag(res.chain.m)
            if stay.min() < 1e-3:
                checks.append(Check(f"{tag} conditioning", True,
                                    f"near-degenerate chain: min leave probability {stay.min():.2e}",
                                    warning=True))
            r = residual(res.chain, res.dist)
            checks.append(Check(f"{tag} stationary", r < 1e-9, f"residual {r:.2e}"))
            floor = lemma1_min_delays(probs)
            m = res.metrics
            ok = all(not math.isfinite(f) or tj >= f - 1e-9
                     for tj, f in ((m.t1_bar, floor[0]), (m.t2_bar, floor[1])))
            checks.append(Check(f"{tag} delay floor", ok, f"T=({m.t1_bar:.6g},{m.t2_bar:.6g})"))
    return checks


# -- entry point --------------------------------------------------------------------

def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two integers 'a,b', got {text!r}") from None
    return a, b


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--output", "-o", help="CSV output path (default: stdout)")
    common.add_argument("--seed", type=int)
    common.add_argument("--backends", help=f"comma list from {', '.join(BACKENDS)}")
    common.add_argument("--policies", help="comma list of delay, throughput")
    common.add_argument("--thresholds", type=_pair, metavar="L1,L2")
    common.add_argument("--caps", type=_pair, metavar="L1MAX,L2MAX")
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--workers", type=int)

    p = argparse.ArgumentParser(prog="bufrelay", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"bufrelay {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="sweep transmit SNR, write CSV")
    sub.add_parser("validate", parents=[common], help="check chain invariants")
    single = sub.add_parser("single", parents=[common], help="one operating point, verbose")
    single.add_argument("--gamma-db", type=float, required=True)
    return p


def _overrides(args) -> dict:
    o = {"seed": args.seed, "thresholds": Thresholds(*args.thresholds) if args.thresholds else None,
         "caps": args.caps, "workers": args.workers}
    if args.backends:
        o["backends"] = _backends("backends", args.backends)
    if args.policies:
        o["policies"] = _policies("policies", args.policies)
    if args.preset:
        o["omega1"], o["omega2"] = PRESETS[args.preset]
    if getattr(args, "gamma_db", None) is not None:
        o["gamma_db"] = (args.gamma_db, args.gamma_db, 1.0)
    return o


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        spec = load_spec(args.config, **_overrides(args))
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        checks = validate(spec)
        lines = []
        for ch in checks:
            label = "WARN" if ch.warning else ("PASS" if ch.ok else "FAIL")
            lines.append(f"{label} {ch.name}: {ch.detail}\n")
        _emit("".join(lines), args.output)
        return EXIT_OK if all(ch.ok for ch in checks) else EXIT_NUMERIC

    rows = run_sweep(spec)
    if args.command == "single":
        for row in rows:
            print(f"[{row['backend']} / {row['policy']}] status={row['status']}", file=sys.stderr)
            for col in METRIC_COLUMNS:
                print(f"  {col:7s} {_cell(row.get(col, math.nan))}", file=sys.stderr)
    _emit(render_csv(rows, spec.seed), args.output)
    return EXIT_OK if all(r["status"] == "ok" or r["status"].startswith("out-of-scope")
                          for r in rows) else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
