"""Experiment drivers behind the command line.

Each driver takes a resolved config dict and an output directory, writes
its metrics files there and returns the paths. Tables go to CSV and
per-round streams to JSONL. Every file starts with a provenance header
(command, config, master seed, version, timestamp); apart from the
timestamp, re-running with the same config gives byte-identical files.
"""

from __future__ import annotations

import copy
import csv
import datetime as _dt
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__, analysis, federated, network
from .data import Dataset, load_mnist, synthetic_blobs
from .errors import ConfigError
from .influence import count_empty_columns, generate
from .rng import SeedSpec
from .trainer import TrainConfig, evaluate, train_local

log = logging.getLogger(__name__)

COMMON = {
    "seed": 0,
    "jobs": 1,
    "data_dir": None,
    "dataset": "mnist",
    "train_limit": None,
    "test_limit": None,
    "blobs_per_class": 100,
    "blobs_separation": 6.0,
}

DEFAULTS = {
    "compress-sweep": {
        "arch": "small", "d": [1, 10], "compression": [1, 8, 32], "seeds": 2,
        "learning_rate": 0.001, "max_epochs": 30, "patience": 10, "batch_size": 128,
        "eval_samples": 100, "mode": "sampled", "init": "uniform",
    },
    "federated": {
        "arch": "mnistfc", "d": 10, "compression": [1, 8, 32], "clients": 10, "rounds": 30,
        "local_epochs": 1, "learning_rate": 0.1, "batch_size": 128, "eval_samples": 20,
        "tau": 0.1, "seed": 1,
    },
    "sensitivity": {
        "arch": "small", "d": 10, "compression": 1, "modes": ["sampled", "continuous"],
        "learning_rate": 0.001, "max_epochs": 30, "patience": 10, "batch_size": 128,
        "tau": [0.01, 0.1, 0.2, 0.5], "trials": 10, "band": "interior", "sampled_k": 10,
    },
    "zhou-compare": {
        "arch": "mnistfc", "d": [1, 2, 4, 16, 256], "compression": 1, "seeds": 2,
        "learning_rate": 0.001, "max_epochs": 3, "patience": 10, "batch_size": 128,
        "best_of": 100,
    },
    "integrality-gap": {
        "arch": "mnistfc", "d": 10, "compression": 1, "modes": ["continuous"],
        "betas": [[0.1, 0.1], [1.0, 1.0]], "seeds": 3, "learning_rate": 0.01,
        "max_epochs": 4, "patience": 10, "batch_size": 128, "eval_samples": 100,
    },
    "analyze": {
        "arch": "mnistfc", "compression": 1, "d": 10, "trials": 20, "cherrypick_rows": 1000,
        "cherrypick_fan_in": 100, "zonotope": {"n": 2, "d": 2, "fan_in": 2},
        "zonotope_draws": 100_000,
    },
    "train-local": {
        "arch": "small", "d": 10, "compression": 1, "mode": "sampled", "learning_rate": 0.001,
        "max_epochs": 30, "patience": 10, "batch_size": 128, "eval_samples": 100,
        "history_samples": 10, "init": "uniform",
    },
}

PAPER_SCALE = {
    "compress-sweep": {"d": [1, 5, 10, 50, 100], "compression": [2**i for i in range(11)],
                       "seeds": 5, "max_epochs": 100},
    "federated": {"rounds": 100, "eval_samples": 100},
    "sensitivity": {"max_epochs": 100},
    "zhou-compare": {"seeds": 5, "max_epochs": 100},
    "integrality-gap": {"modes": ["continuous", "sampled"], "max_epochs": 100,
                        "betas": [[0.1, 0.1], [0.5, 0.5], [1.0, 1.0], [2.0, 2.0], [5.0, 5.0]]},
    "analyze": {},
    "train-local": {"max_epochs": 100},
}

COMMANDS = tuple(DEFAULTS)


# -- config -----------------------------------------------------------------

def load_config_file(path) -> dict:
    """JSON or YAML document; YAML is a superset so one parser covers both."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    return doc


def resolve_config(command: str, document: dict | None = None, overrides: dict | None = None,
                   paper_scale: bool = False) -> dict:
    """Defaults, then paper-scale settings, then the document, then overrides.

    A document may hold shared keys at the top level and per-command
    sections keyed by command name; other commands' sections are ignored.
    """
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    cfg = copy.deepcopy({**COMMON, **DEFAULTS[command]})
    if paper_scale:
        cfg.update(copy.deepcopy(PAPER_SCALE[command]))
    document = dict(document or {})
    section = document.pop(command, None) or {}
    for name in COMMANDS:
        document.pop(name, None)
    for layer in (document, section, overrides or {}):
        for key, value in layer.items():
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r} for {command}")
            cfg[key] = value
    return cfg


def as_list(value) -> list:
    if value is None:
        return []
    return list(value) if isinstance(value, (list, tuple)) else [value]


def parse_init(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple)) and len(value) == 3:
        return (str(value[0]), float(value[1]), float(value[2]))
    raise ConfigError(f"init must be 'uniform' or ['beta', a, b], got {value!r}")


def n_for(arch, compression) -> int:
    m = network.param_count(arch)
    if compression <= 0:
        raise ConfigError(f"compression must be positive, got {compression}")
    n = int(m // compression)
    if n < 1:
        raise ConfigError(f"compression {compression} leaves no trainable parameters (m={m})")
    return n


def seed_list(cfg) -> list[int]:
    count = int(cfg["seeds"])
    if count < 1:
        raise ConfigError("seeds must be >= 1")
    return [int(cfg["seed"]) + i for i in range(count)]


def train_config(cfg, **kw) -> TrainConfig:
    base = dict(
        learning_rate=float(cfg["learning_rate"]),
        max_epochs=int(cfg["max_epochs"]),
        patience=int(cfg["patience"]),
        batch_size=int(cfg["batch_size"]),
        history_samples=0,
    )
    base.update(kw)
    return TrainConfig(**base)


# -- data -------------------------------------------------------------------

def load_data(cfg, arch) -> tuple[Dataset, Dataset]:
    kind = cfg["dataset"]
    if kind == "mnist":
        train, test = load_mnist(cfg["data_dir"])
    elif kind == "blobs":
        dim, classes = arch.layer_sizes[0], arch.layer_sizes[-1]
        args = (int(cfg["blobs_per_class"]), classes, dim, float(cfg["blobs_separation"]))
        train = synthetic_blobs(*args, seed=int(cfg["seed"]), split="train")
        test = synthetic_blobs(*args, seed=int(cfg["seed"]), split="test")
    else:
        raise ConfigError(f"dataset must be 'mnist' or 'blobs', got {kind!r}")
    if train.images.shape[1] != arch.layer_sizes[0]:
        raise ConfigError(f"data has {train.images.shape[1]} features, arch expects "
                          f"{arch.layer_sizes[0]}")
    if cfg["train_limit"]:
        train = train.subset(np.arange(min(int(cfg["train_limit"]), len(train))))
    if cfg["test_limit"]:
        test = test.subset(np.arange(min(int(cfg["test_limit"]), len(test))))
    return train, test


# -- output -----------------------------------------------------------------

def provenance(command: str, cfg: dict) -> dict:
    return {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return ""
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def write_csv(path: Path, prov: dict, columns: list[str], rows: list[dict]) -> Path:
    """CSV with '#'-prefixed provenance lines; missing or NaN cells are empty."""
    buf = io.StringIO()
    buf.write(f"# command: {prov['command']}\n")
    buf.write(f"# version: {prov['version']}\n")
    buf.write(f"# seed: {prov['seed']}\n")
    buf.write(f"# config: {json.dumps(prov['config'], sort_keys=True)}\n")
    buf.write(f"# timestamp: {prov['timestamp']}\n")
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _cell(row.get(k)) for k in columns})
    path.write_text(buf.getvalue())
    return path


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _json_line(obj) -> str:
    # NaN is not valid JSON; write null instead
    def clean(v):
        if isinstance(v, float) and math.isnan(v):
            return None
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v
    return json.dumps(clean(obj), sort_keys=True, default=_json_default) + "\n"


class JsonlWriter:
    """First line ``{"provenance": ...}``, then one JSON object per record."""

    def __init__(self, path: Path, prov: dict):
        self.path = path
        self._fh = open(path, "w")
        self._fh.write(_json_line({"provenance": prov}))

    def write(self, record: dict) -> None:
        self._fh.write(_json_line(record))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def strip_timestamp(text: str) -> str:
    """Drop the timestamp from a metrics file, for reproducibility checks."""
    lines = text.splitlines(keepends=True)
    out = []
    for i, line in enumerate(lines):
        if line.startswith("# timestamp:"):
            continue
        if i == 0 and line.startswith('{"provenance"'):
            head = json.loads(line)
            head["provenance"].pop("timestamp", None)
            line = _json_line(head)
        out.append(line)
    return "".join(out)


def parallel_map(fn, items, jobs: int) -> list:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def mean_std(values) -> tuple[float, float | None]:
    """Mean and sample std; std is None for a single value."""
    a = np.asarray(values, dtype=np.float64)
    return float(a.mean()), (float(a.std(ddof=1)) if a.size > 1 else None)


# -- compress-sweep ---------------------------------------------------------

SWEEP_COLUMNS = ["d", "compression", "n", "seed", "epochs", "final_loss", "expected_acc",
                 "sampled_mean", "sampled_std"]
SUMMARY_COLUMNS = ["d", "compression", "n", "seeds", "sampled_mean", "sampled_std",
                   "expected_mean"]


def sweep_cell(arch, train, test, d, compression, seed, tcfg, eval_samples) -> dict:
    n = n_for(arch, compression)
    spec = SeedSpec(seed)
    Q = generate(arch.layout.fan_in, n, d, spec)
    res = train_local(tcfg, Q, arch, train, seed=spec)
    row = {"d": d, "compression": compression, "n": n, "seed": seed,
           "epochs": res.stopped_epoch, "final_loss": res.history[-1]["loss"],
           "expected_acc": evaluate(res.p, Q, arch, test, "expected").mean}
    if eval_samples:
        st = evaluate(res.p, Q, arch, test, "sampled", eval_samples, rng=spec.evaluation(0))
        row["sampled_mean"], row["sampled_std"] = st.mean, st.std
    log.info("d=%s m/n=%s seed=%s: sampled %.4f", d, compression, seed,
             row.get("sampled_mean", float("nan")))
    return row


def cmd_compress_sweep(cfg: dict, out: Path) -> list[Path]:
    arch = network.get_arch(cfg["arch"])
    ds, cfs, seeds = as_list(cfg["d"]), as_list(cfg["compression"]), seed_list(cfg)
    if not ds or not cfs:
        raise ConfigError("d and compression lists must be non-empty")
    grid = [(int(d), c, s) for d in ds for c in cfs for s in seeds]
    for d, c, _ in grid:
        n = n_for(arch, c)
        if d > n:
            raise ConfigError(f"d={d} exceeds n={n} at compression {c}")
    tcfg = train_config(cfg, mode=cfg["mode"], init=parse_init(cfg["init"]))
    train, test = load_data(cfg, arch)
    rows = parallel_map(
        lambda cell: sweep_cell(arch, train, test, *cell, tcfg, int(cfg["eval_samples"])),
        grid, int(cfg["jobs"]))
    summary = []
    for d in ds:
        for c in cfs:
            cell = [r for r in rows if r["d"] == int(d) and r["compression"] == c]
            key = "sampled_mean" if "sampled_mean" in cell[0] else "expected_acc"
            mean, std = mean_std([r[key] for r in cell])
            summary.append({"d": int(d), "compression": c, "n": cell[0]["n"],
                            "seeds": len(cell), "sampled_mean": mean, "sampled_std": std,
                            "expected_mean": mean_std([r["expected_acc"] for r in cell])[0]})
    prov = provenance("compress-sweep", cfg)
    return [write_csv(out / "compress_sweep.csv", prov, SWEEP_COLUMNS, rows),
            write_csv(out / "compress_sweep_summary.csv", prov, SUMMARY_COLUMNS, summary)]


# -- federated --------------------------------------------------------------

FED_SUMMARY_COLUMNS = ["compression", "n", "rounds", "clients", "client_savings",
                       "server_savings", "bits_uplink", "bits_downlink", "expected_acc",
                       "sampled_mean", "sampled_std"]


def cmd_federated(cfg: dict, out: Path) -> list[Path]:
    arch = network.get_arch(cfg["arch"])
    cfs = as_list(cfg["compression"])
    if not cfs:
        raise ConfigError("compression list must be non-empty")
    configs = []
    for c in cfs:
        n = n_for(arch, c)
        if int(cfg["d"]) > n:
            raise ConfigError(f"d={cfg['d']} exceeds n={n} at compression {c}")
        configs.append((c, federated.FederatedConfig(
            clients=int(cfg["clients"]), rounds=int(cfg["rounds"]),
            local_epochs=int(cfg["local_epochs"]), learning_rate=float(cfg["learning_rate"]),
            d=int(cfg["d"]), arch=cfg["arch"], seed=int(cfg["seed"]),
            batch_size=int(cfg["batch_size"]), eval_samples=int(cfg["eval_samples"]),
            tau=float(cfg["tau"]), jobs=int(cfg["jobs"]), n=n)))
    train, test = load_data(cfg, arch)
    prov = provenance("federated", cfg)
    summary = []
    with JsonlWriter(out / "federated.jsonl", prov) as stream:
        for c, fcfg in configs:
            m = network.param_count(arch)

            def emit(metrics, c=c, n=fcfg.n):
                stream.write({"compression": c, "n": n, **metrics.as_dict()})

            res = federated.run_simulation(fcfg, train, test, on_round=emit)
            client_f, server_f = federated.communication_savings(m, fcfg.n)
            last = res.rounds[-1] if res.rounds else None
            summary.append({
                "compression": c, "n": fcfg.n, "rounds": fcfg.rounds, "clients": fcfg.clients,
                "client_savings": client_f, "server_savings": server_f,
                "bits_uplink": res.ledger.bits_uplink, "bits_downlink": res.ledger.bits_downlink,
                "expected_acc": last.expected_acc if last else None,
                "sampled_mean": last.sampled_mean if last else None,
                "sampled_std": last.sampled_std if last else None,
            })
    return [out / "federated.jsonl",
            write_csv(out / "federated_summary.csv", prov, FED_SUMMARY_COLUMNS, summary)]


# -- sensitivity ------------------------------------------------------------

SENS_COLUMNS = ["mode", "tau", "band", "perturbed_coords", "base_accuracy", "accuracy",
                "accuracy_std", "sensitivity", "sensitivity_std", "deviation", "deviation_std",
                "sampled_accuracy", "sampled_accuracy_std", "note"]


def cmd_sensitivity(cfg: dict, out: Path) -> list[Path]:
    arch = network.get_arch(cfg["arch"])
    taus = [float(t) for t in as_list(cfg["tau"])]
    modes = as_list(cfg["modes"])
    prov = provenance("sensitivity", cfg)
    path = out / "sensitivity.csv"
    if not taus:
        log.warning("empty tau list; nothing to probe")
        return [write_csv(path, prov, SENS_COLUMNS, [{"note": "empty tau list, nothing run"}])]
    for t in taus:
        if not 0 <= t <= 0.5:
            raise ConfigError(f"tau must lie in [0, 0.5], got {t}")
    if cfg["band"] not in analysis.BANDS:
        raise ConfigError(f"band must be one of {analysis.BANDS}")
    train, test = load_data(cfg, arch)
    spec = SeedSpec(int(cfg["seed"]))
    Q = generate(arch.layout.fan_in, n_for(arch, cfg["compression"]), int(cfg["d"]), spec)

    def run(mode):
        res = train_local(train_config(cfg, mode=mode), Q, arch, train, seed=spec)
        rows = []
        for tau in taus:
            r = analysis.sensitivity_probe(res.p, Q, arch, test, tau, int(cfg["trials"]), spec,
                                           band=cfg["band"], sampled_k=int(cfg["sampled_k"]))
            row = {k: getattr(r, k) for k in SENS_COLUMNS if hasattr(r, k)}
            rows.append({"mode": mode, "band": cfg["band"], **row})
        return rows

    rows = [r for block in parallel_map(run, modes, int(cfg["jobs"])) for r in block]
    return [write_csv(path, prov, SENS_COLUMNS, rows)]


# -- zhou-compare -----------------------------------------------------------

ZHOU_COLUMNS = ["d", "n", "seed", "epochs", "best_acc", "mean_acc", "expected_acc"]
ZHOU_SUMMARY = ["d", "n", "seeds", "best_mean", "best_std", "expected_mean"]


def cmd_zhou_compare(cfg: dict, out: Path) -> list[Path]:
    arch = network.get_arch(cfg["arch"])
    n = n_for(arch, cfg["compression"])
    ds = [int(d) for d in as_list(cfg["d"])]
    if not ds or max(ds) > n:
        raise ConfigError(f"degrees must be non-empty and at most n={n}")
    seeds = seed_list(cfg)
    train, test = load_data(cfg, arch)
    tcfg = train_config(cfg)
    rows = []
    for d in ds:
        def run(seed, d=d):
            spec = SeedSpec(seed)
            Q = generate(arch.layout.fan_in, n, d, spec)
            res = train_local(tcfg, Q, arch, train, seed=spec)
            st = evaluate(res.p, Q, arch, test, "sampled", int(cfg["best_of"]),
                          rng=spec.evaluation(0))
            return {"d": d, "n": n, "seed": seed, "epochs": res.stopped_epoch,
                    "best_acc": st.max, "mean_acc": st.mean,
                    "expected_acc": evaluate(res.p, Q, arch, test, "expected").mean}
        # one d at a time keeps at most ``jobs`` matrices alive
        rows.extend(parallel_map(run, seeds, int(cfg["jobs"])))
    summary = []
    for d in ds:
        cell = [r for r in rows if r["d"] == d]
        best, std = mean_std([r["best_acc"] for r in cell])
        summary.append({"d": d, "n": n, "seeds": len(cell), "best_mean": best, "best_std": std,
                        "expected_mean": mean_std([r["expected_acc"] for r in cell])[0]})
    prov = provenance("zhou-compare", cfg)
    return [write_csv(out / "zhou_compare.csv", prov, ZHOU_COLUMNS, rows),
            write_csv(out / "zhou_compare_summary.csv", prov, ZHOU_SUMMARY, summary)]


# -- integrality-gap --------------------------------------------------------

GAP_COLUMNS = ["mode", "alpha", "beta", "seed", "epochs", "expected_acc", "sampled_mean",
               "sampled_std", "sampled_min", "sampled_max", "discretized_acc", "gap"]


def cmd_integrality_gap(cfg: dict, out: Path) -> list[Path]:
    arch = network.get_arch(cfg["arch"])
    n = n_for(arch, cfg["compression"])
    betas = [tuple(float(x) for x in b) for b in as_list(cfg["betas"])]
    if not betas or any(len(b) != 2 or min(b) <= 0 for b in betas):
        raise ConfigError("betas must be a non-empty list of positive [alpha, beta] pairs")
    modes, seeds = as_list(cfg["modes"]), seed_list(cfg)
    train, test = load_data(cfg, arch)
    cells = [(mode, a, b, s) for mode in modes for a, b in betas for s in seeds]

    def run(cell):
        mode, a, b, seed = cell
        spec = SeedSpec(seed)
        Q = generate(arch.layout.fan_in, n, int(cfg["d"]), spec)
        res = train_local(train_config(cfg, mode=mode, init=("beta", a, b)), Q, arch, train,
                          seed=spec)
        exp = evaluate(res.p, Q, arch, test, "expected").mean
        st = evaluate(res.p, Q, arch, test, "sampled", int(cfg["eval_samples"]),
                      rng=spec.evaluation(0))
        disc = evaluate(res.p, Q, arch, test, "discretized").mean
        return {"mode": mode, "alpha": a, "beta": b, "seed": seed, "epochs": res.stopped_epoch,
                "expected_acc": exp, "sampled_mean": st.mean, "sampled_std": st.std,
                "sampled_min": st.min, "sampled_max": st.max, "discretized_acc": disc,
                "gap": exp - st.mean}

    rows = parallel_map(run, cells, int(cfg["jobs"]))
    return [write_csv(out / "integrality_gap.csv", provenance("integrality-gap", cfg),
                      GAP_COLUMNS, rows)]


# -- analyze ----------------------------------------------------------------

ANALYZE_COLUMNS = ["quantity", "params", "formula", "monte_carlo", "mc_se"]


def _se(values) -> float:
    a = np.asarray(values, dtype=np.float64)
    return float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else float("nan")


def analyze_rows(cfg: dict) -> list[dict]:
    arch = network.get_arch(cfg["arch"])
    m = network.param_count(arch)
    n = n_for(arch, cfg["compression"])
    d = int(cfg["d"])
    trials = int(cfg["trials"])
    if d > n:
        raise ConfigError(f"d={d} exceeds n={n}")
    spec = SeedSpec(int(cfg["seed"]))
    rows = []

    def add(name, params, formula, samples=None):
        rows.append({"quantity": name, "params": json.dumps(params, sort_keys=True),
                     "formula": formula,
                     "monte_carlo": float(np.mean(samples)) if samples is not None else None,
                     "mc_se": _se(samples) if samples is not None else None})

    base = {"m": m, "n": n, "d": d}
    nz = analysis.simulate_nonzero_weights(m, n, d, trials, spec) / m
    add("nonzero_fraction", base, analysis.expected_nonzero_weights(m, d) / m, nz)
    fan = np.ones(m)
    empty = [count_empty_columns(generate(fan, n, d, spec.stream("analyze-empty", t)
                                          .integers(2**63))) / n for t in range(trials)]
    add("empty_column_fraction", base, analysis.expected_empty_fraction(n, d, m), empty)
    loads = generate(fan, n, d, spec).column_loads()
    add("column_load", base, analysis.expected_column_load(m, n, d), loads)
    rows_cp, fan_cp = int(cfg["cherrypick_rows"]), int(cfg["cherrypick_fan_in"])
    lo, hi = analysis.cherrypick_bounds(d, fan_cp)
    vals = analysis.cherrypick_values(rows_cp, d, fan_cp, spec)
    cp = {"d": d, "fan_in": fan_cp, "rows": rows_cp}
    add("cherrypick_lower", cp, lo, vals)
    add("cherrypick_upper", cp, hi, vals)
    z = cfg["zonotope"]
    zspec = analysis.ZonotopeSpec(int(z["n"]), int(z["d"]), z["fan_in"])
    draws = int(cfg["zonotope_draws"])
    vols = analysis.zonotope_volume_monte_carlo(zspec, draws, spec) if draws else None
    add("zonotope_volume", {"n": zspec.n, "d": zspec.d, "fan_in": list(zspec.fan_ins),
                            "draws": draws},
        analysis.zonotope_volume_expected(zspec), vols)
    return rows


def cmd_analyze(cfg: dict, out: Path) -> list[Path]:
    rows = analyze_rows(cfg)
    for r in rows:
        mc = "" if r["monte_carlo"] is None else f"{r['monte_carlo']:.6g} (se {r['mc_se']:.2g})"
        print(f"{r['quantity']:24s} formula {r['formula']:.6g}   monte carlo {mc}")
    return [write_csv(out / "analyze.csv", provenance("analyze", cfg), ANALYZE_COLUMNS, rows)]


# -- train-local ------------------------------------------------------------

def cmd_train_local(cfg: dict, out: Path) -> list[Path]:
    arch = network.get_arch(cfg["arch"])
    n = n_for(arch, cfg["compression"])
    tcfg = train_config(cfg, mode=cfg["mode"], init=parse_init(cfg["init"]),
                        history_samples=int(cfg["history_samples"]))
    train, test = load_data(cfg, arch)
    spec = SeedSpec(int(cfg["seed"]))
    Q = generate(arch.layout.fan_in, n, int(cfg["d"]), spec)
    res = train_local(tcfg, Q, arch, train, seed=spec, eval_data=test)
    path = out / "train_local.jsonl"
    with JsonlWriter(path, provenance("train-local", cfg)) as stream:
        for row in res.history:
            stream.write({"kind": "epoch", **row})
        final = {"kind": "final", "epochs": res.stopped_epoch, "n": n,
                 "expected_acc": evaluate(res.p, Q, arch, test, "expected").mean,
                 "discretized_acc": evaluate(res.p, Q, arch, test, "discretized").mean}
        if cfg["eval_samples"]:
            st = evaluate(res.p, Q, arch, test, "sampled", int(cfg["eval_samples"]),
                          rng=spec.evaluation(0))
            final.update(sampled_mean=st.mean, sampled_std=st.std)
        stream.write(final)
    return [path]


DRIVERS = {
    "compress-sweep": cmd_compress_sweep,
    "federated": cmd_federated,
    "sensitivity": cmd_sensitivity,
    "zhou-compare": cmd_zhou_compare,
    "integrality-gap": cmd_integrality_gap,
    "analyze": cmd_analyze,
    "train-local": cmd_train_local,
}


def run(command: str, cfg: dict, out) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return DRIVERS[command](cfg, out)
