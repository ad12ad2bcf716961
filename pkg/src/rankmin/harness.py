"""Experiment harness: config files, seeded grid execution, CSV/SVG/JSON artifacts.

A run grid is the product (algorithm x kappa x r_star x eta x seed). Every run
gets its own RNG built from (master_seed + seed_offset, run_index), so results
are reproducible run-by-run no matter how the grid is scheduled; worker count
changes wall time only, never bytes. All files are written by the parent
process via temp-file + rename, sorted by name.
"""

from __future__ import annotations

import configparser
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .objectives import generate_sensing, make_rng, sensing_objective, spectral_init
from .solvers import ALGORITHMS, PprojgdParams, SolverConfig, run_solver
from . import svgplot

PACKAGE_VERSION = "0.1.0"

REL_CLIP_LO = 1e-16
REL_CLIP_HI = 1e3


class SpecFileError(ValueError):
    """Raised for malformed experiment spec files (unknown keys are errors)."""


@dataclass(frozen=True)
class ExperimentSpec:
    n: int = 10
    r: int = 4
    r_star: tuple = (4,)
    kappa: tuple = (1.0,)
    m_factor: int = 3
    psd: bool = False
    algorithms: tuple = ("projgd",)
    etas: tuple = (0.4,)
    pprojgd: PprojgdParams = field(default_factory=PprojgdParams)
    seed_count: int = 10
    master_seed: int = 0
    seeds: tuple | None = None          # explicit list wins over count
    max_iters: int = 1000
    tol_rel_err: float = 1e-14
    diverge_threshold: float = 1e2
    out_dir: str | None = None
    formats: tuple = ("csv", "svg", "json")
    checkpoint_stride: int | None = None

    def resolved_seeds(self) -> tuple:
        if self.seeds is not None:
            return tuple(int(s) for s in self.seeds)
        return tuple(self.master_seed + i for i in range(self.seed_count))

    def validate(self):
        if not (1 <= min(self.r_star) and max(self.r_star) <= self.r <= self.n):
            raise SpecFileError("need 1 <= r_star <= r <= n")
        if self.m_factor < 1:
            raise SpecFileError("m_factor must be >= 1")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise SpecFileError(f"unknown algorithm {a!r} (have {', '.join(ALGORITHMS)})")
        if any(e <= 0 for e in self.etas):
            raise SpecFileError("eta values must be positive")
        if any(k < 1 for k in self.kappa):
            raise SpecFileError("kappa must be >= 1")
        if self.max_iters < 1:
            raise SpecFileError("max_iters must be >= 1")
        if not self.resolved_seeds():
            raise SpecFileError("empty seed list")
        bad = set(self.formats) - {"csv", "svg", "json"}
        if bad:
            raise SpecFileError(f"unknown formats: {sorted(bad)}")
        return self


# Section -> {key: parser}. Anything outside this table is a hard error;
# a typo like "step_szie" must not silently fall back to a default.
def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_floats(s):
    return tuple(float(tok) for tok in s.replace(",", " ").split())


def _parse_ints(s):
    return tuple(int(tok) for tok in s.replace(",", " ").split())


def _parse_words(s):
    return tuple(tok.strip().lower() for tok in s.replace(",", " ").split())


_SCHEMA = {
    "problem": {
        "n": int, "r": int,
        "r_star": _parse_ints, "kappa": _parse_floats,
        "m_factor": int, "psd": _parse_bool,
    },
    "solvers": {
        "algorithms": _parse_words, "eta": _parse_floats,
    },
    "pprojgd": {
        "epsilon": float, "epsilon_t": float, "eta_t": float,
        "perturb_radius": float, "max_tangent_iters": int,
    },
    "run": {
        "seeds": _parse_ints, "seed_count": int, "master_seed": int,
        "max_iters": int, "tol_rel_err": float, "diverge_threshold": float,
    },
    "output": {
        "directory": str, "formats": _parse_words, "checkpoint_stride": int,
    },
}

_FIELD_BY_KEY = {
    ("problem", "n"): "n", ("problem", "r"): "r",
    ("problem", "r_star"): "r_star", ("problem", "kappa"): "kappa",
    ("problem", "m_factor"): "m_factor", ("problem", "psd"): "psd",
    ("solvers", "algorithms"): "algorithms", ("solvers", "eta"): "etas",
    ("run", "seeds"): "seeds", ("run", "seed_count"): "seed_count",
    ("run", "master_seed"): "master_seed", ("run", "max_iters"): "max_iters",
    ("run", "tol_rel_err"): "tol_rel_err",
    ("run", "diverge_threshold"): "diverge_threshold",
    ("output", "directory"): "out_dir", ("output", "formats"): "formats",
    ("output", "checkpoint_stride"): "checkpoint_stride",
}


def parse_spec_text(text: str, source: str = "<string>") -> ExperimentSpec:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise SpecFileError(f"{source}: {e}") from e
    kwargs = {}
    pp = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise SpecFileError(f"{source}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise SpecFileError(f"{source}: unknown key {key!r} in [{section}]")
            try:
                val = _SCHEMA[section][key](raw)
            except ValueError as e:
                raise SpecFileError(f"{source}: bad value for {section}.{key}: {e}") from e
            if section == "pprojgd":
                pp[key] = val
            else:
                kwargs[_FIELD_BY_KEY[(section, key)]] = val
    if pp:
        kwargs["pprojgd"] = PprojgdParams(**pp)
    spec = ExperimentSpec(**kwargs)
    return spec.validate()


def parse_spec_file(path) -> ExperimentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec_text(fh.read(), source=str(path))


def spec_to_text(spec: ExperimentSpec) -> str:
    """Round-trippable config text (embedded in the manifest so a run
    directory is self-describing)."""
    lines = ["[problem]"]
    lines.append(f"n = {spec.n}")
    lines.append(f"r = {spec.r}")
    lines.append("r_star = " + " ".join(str(v) for v in spec.r_star))
    lines.append("kappa = " + " ".join(_fmt(v) for v in spec.kappa))
    lines.append(f"m_factor = {spec.m_factor}")
    lines.append(f"psd = {'true' if spec.psd else 'false'}")
    lines.append("")
    lines.append("[solvers]")
    lines.append("algorithms = " + " ".join(spec.algorithms))
    lines.append("eta = " + " ".join(_fmt(v) for v in spec.etas))
    lines.append("")
    lines.append("[run]")
    if spec.seeds is not None:
        lines.append("seeds = " + " ".join(str(s) for s in spec.seeds))
    else:
        lines.append(f"seed_count = {spec.seed_count}")
        lines.append(f"master_seed = {spec.master_seed}")
    lines.append(f"max_iters = {spec.max_iters}")
    lines.append(f"tol_rel_err = {_fmt(spec.tol_rel_err)}")
    lines.append(f"diverge_threshold = {_fmt(spec.diverge_threshold)}")
    lines.append("")
    lines.append("[output]")
    if spec.out_dir:
        lines.append(f"directory = {spec.out_dir}")
    lines.append("formats = " + " ".join(spec.formats))
    if spec.checkpoint_stride is not None:
        lines.append(f"checkpoint_stride = {spec.checkpoint_stride}")
    lines.append("")
    return "\n".join(lines)


def _fmt(x) -> str:
    # shortest round-trip decimal; integers drop the trailing .0
    if float(x) == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


# ---------------------------------------------------------------------------
# presets


def preset_fig1() -> ExperimentSpec:
    """Asymmetric sensing trace panels: m = 3nr, both condition numbers,
    exact and over-parameterized rank."""
    return ExperimentSpec(
        n=10, r=4, r_star=(4, 2), kappa=(1.0, 20.0), m_factor=3, psd=False,
        algorithms=("projgd", "fgd", "scaledgd"), etas=(0.4, 0.6),
        seed_count=10, master_seed=0, max_iters=1000,
        tol_rel_err=1e-14, diverge_threshold=1e2,
    )


def preset_fig2() -> ExperimentSpec:
    """PSD variant of the trace panels, with the preconditioned baseline
    that requires symmetry."""
    return replace(preset_fig1(), psd=True,
                   algorithms=("projgd", "fgd", "scaledgd", "precgd"))


def preset_fig3() -> ExperimentSpec:
    """Step-size robustness sweep: m = 10nr, 80 iterations, eta from 0.1
    to 1.2 in steps of 0.05."""
    etas = tuple(round(0.1 + 0.05 * k, 2) for k in range(23))
    return ExperimentSpec(
        n=10, r=4, r_star=(4,), kappa=(1.0,), m_factor=10, psd=False,
        algorithms=("projgd", "fgd", "scaledgd"), etas=etas,
        seed_count=10, master_seed=0, max_iters=80,
        tol_rel_err=1e-14, diverge_threshold=1e2,
    )


PRESETS = {"fig1": preset_fig1, "fig2": preset_fig2, "fig3": preset_fig3}


# ---------------------------------------------------------------------------
# execution


def run_filename(algo, kappa, r_star, eta, seed) -> str:
    return f"{algo}_k{_fmt(kappa)}_rs{r_star}_eta{_fmt(eta)}_s{seed}.csv"


def _grid(spec: ExperimentSpec):
    tasks = []
    idx = 0
    for algo in spec.algorithms:
        for kappa in spec.kappa:
            for r_star in spec.r_star:
                for eta in spec.etas:
                    for seed in spec.resolved_seeds():
                        tasks.append((idx, algo, kappa, r_star, eta, seed))
                        idx += 1
    return tasks


def _execute_one(args):
    spec, idx, algo, kappa, r_star, eta, seed = args
    problem = generate_sensing(
        n=spec.n, r=spec.r, r_star=r_star, kappa=kappa,
        m=spec.m_factor * spec.n * spec.r, seed=seed,
        symmetric_psd=spec.psd,
    )
    f = sensing_objective(problem)
    x0 = spectral_init(problem)
    stride = spec.checkpoint_stride
    cfg = SolverConfig(
        eta=eta, max_iters=spec.max_iters, tol_rel_err=spec.tol_rel_err,
        diverge_threshold=spec.diverge_threshold,
        checkpoint_stride=stride if stride is not None else spec.max_iters,
        pprojgd=spec.pprojgd,
    )
    rng = make_rng(seed, stream=idx)
    trace = run_solver(algo, f, x0, cfg, x_star=problem.ground_truth, rng=rng)
    last = trace.records[-1]
    summary = {
        "algo": algo, "kappa": kappa, "r_star": r_star, "eta": eta,
        "seed": seed, "status": trace.status,
        "final_rel_err": last.rel_err, "iterations": last.iteration,
    }
    return run_filename(algo, kappa, r_star, eta, seed), trace.csv_text(), summary


def _atomic_write(path, data: str):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunResult:
    out_dir: str
    files: list
    summaries: list


def run_experiment(spec: ExperimentSpec, out_dir=None, jobs: int = 1) -> RunResult:
    spec.validate()
    out_dir = out_dir or spec.out_dir
    if not out_dir:
        raise SpecFileError("no output directory (set [output] directory or pass --out)")
    os.makedirs(out_dir, exist_ok=True)
    tasks = [(spec,) + t for t in _grid(spec)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_execute_one, tasks, chunksize=4))
    else:
        rows = [_execute_one(t) for t in tasks]

    files = []
    rows.sort(key=lambda r: r[0])
    if "csv" in spec.formats:
        for name, csv_text, _ in rows:
            _atomic_write(os.path.join(out_dir, name), csv_text)
            files.append(name)
        sweep = _sweep_table([r[2] for r in rows])
        _atomic_write(os.path.join(out_dir, "eta_sweep.csv"), sweep)
        files.append("eta_sweep.csv")
    if "svg" in spec.formats:
        files += _render_svgs(spec, out_dir, rows)
    summaries = [r[2] for r in rows]
    if "json" in spec.formats:
        manifest = {
            "config": spec_to_text(spec),
            "version": PACKAGE_VERSION,
            "runs": summaries,
            "files": sorted(files),
        }
        _atomic_write(os.path.join(out_dir, "manifest.json"),
                      json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        files.append("manifest.json")
    return RunResult(out_dir=out_dir, files=sorted(files), summaries=summaries)


def _sweep_table(summaries) -> str:
    lines = ["algo,kappa,r_star,eta,seed,final_rel_err,status"]
    for s in summaries:
        lines.append(",".join([
            s["algo"], _fmt(s["kappa"]), str(s["r_star"]), _fmt(s["eta"]),
            str(s["seed"]), repr(float(s["final_rel_err"])), s["status"],
        ]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# plotting (delegates geometry to svgplot; this file owns the data shaping)


def _median_band(traces):
    """Align traces of different lengths by holding the last value, then
    take per-iteration median and min/max envelope."""
    tmax = max(len(t) for t in traces)
    grid = np.empty((len(traces), tmax))
    for i, t in enumerate(traces):
        grid[i, :len(t)] = t
        grid[i, len(t):] = t[-1]
    med = np.median(grid, axis=0)
    return med, grid.min(axis=0), grid.max(axis=0)


def _log_clip(vals):
    return np.log10(np.clip(np.nan_to_num(np.asarray(vals, dtype=float),
                                          nan=REL_CLIP_HI, posinf=REL_CLIP_HI),
                            REL_CLIP_LO, REL_CLIP_HI))


def _render_svgs(spec, out_dir, rows) -> list:
    by_run = {}
    for name, csv_text, s in rows:
        rel = _trace_column(csv_text, "rel_err")
        by_run[(s["algo"], s["kappa"], s["r_star"], s["eta"], s["seed"])] = rel
    written = []
    seeds = spec.resolved_seeds()
    for kappa in spec.kappa:
        for r_star in spec.r_star:
            series = []
            for algo in spec.algorithms:
                for eta in spec.etas:
                    traces = [by_run[(algo, kappa, r_star, eta, s)] for s in seeds]
                    med, lo, hi = _median_band(traces)
                    entry = {
                        "label": f"{algo} eta={_fmt(eta)}",
                        "x": list(range(len(med))),
                        "y": _log_clip(med).tolist(),
                    }
                    if len(seeds) > 1:
                        entry["band"] = (_log_clip(lo).tolist(), _log_clip(hi).tolist())
                    series.append(entry)
            name = f"panel_k{_fmt(kappa)}_rs{r_star}.svg"
            svg = svgplot.render_panel(
                title=f"kappa={_fmt(kappa)} r*={r_star}",
                xlabel="iteration", ylabel="log10 relative error",
                series=series)
            _atomic_write(os.path.join(out_dir, name), svg)
            written.append(name)
            if len(spec.etas) >= 2:
                series = []
                for algo in spec.algorithms:
                    finals = []
                    for eta in spec.etas:
                        per_seed = [by_run[(algo, kappa, r_star, eta, s)][-1] for s in seeds]
                        finals.append(float(np.median(per_seed)))
                    series.append({
                        "label": algo,
                        "x": [float(e) for e in spec.etas],
                        "y": _log_clip(finals).tolist(),
                    })
                name = f"sweep_k{_fmt(kappa)}_rs{r_star}.svg"
                svg = svgplot.render_panel(
                    title=f"final error vs step size (kappa={_fmt(kappa)} r*={r_star})",
                    xlabel="eta", ylabel="log10 relative error",
                    series=series)
                _atomic_write(os.path.join(out_dir, name), svg)
                written.append(name)
    return written


def _trace_column(csv_text: str, column: str):
    lines = csv_text.strip().split("\n")
    cols = lines[0].split(",")
    j = cols.index(column)
    return [float(line.split(",")[j]) for line in lines[1:]]


def read_trace_csv(path):
    """Columns of one run trace as a dict of lists (floats except branch)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().strip().split("\n")
    cols = lines[0].split(",")
    out = {c: [] for c in cols}
    for line in lines[1:]:
        for c, tok in zip(cols, line.split(",")):
            out[c].append(tok if c == "branch" else float(tok))
    return out


def render_dir(path) -> list:
    """Re-render SVGs for an existing run directory from its manifest and
    CSVs (no solver execution)."""
    mpath = os.path.join(path, "manifest.json")
    if not os.path.isfile(mpath):
        raise FileNotFoundError(f"no manifest.json under {path}")
    with open(mpath, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    spec = parse_spec_text(manifest["config"], source=mpath)
    rows = []
    for s in manifest["runs"]:
        name = run_filename(s["algo"], s["kappa"], s["r_star"], s["eta"], s["seed"])
        with open(os.path.join(path, name), "r", encoding="utf-8") as fh:
            rows.append((name, fh.read(), s))
    return _render_svgs(spec, path, rows)
