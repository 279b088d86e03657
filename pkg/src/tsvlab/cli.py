"""``tsv-lab``: run a named scenario from a JSON config and write a table.

A config file looks like::

    {"scenario": "protect",
     "parameters": {"lam": 2.0, "N": 20, "meas_dirs": [[1, 0, 0], [0, 0, 1]]},
     "output": {"format": "json", "path": "protect.json"}}

Every key is optional; unknown keys are rejected.  ``--config`` also accepts
the name of a bundled config (see ``tsv-lab --list-configs``).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import TSVError
from .kaon import KaonParams, branch_probabilities, kaon_kets, kaon_overlap_check, survival_postselected_run
from .nonhermitian import BiorthogonalSystem, add_measurement_term, effective_protector, first_order_eigenvalues
from .pointer import PointerModel, adiabatic_measure_single
from .protection import ProtectionSetup, disturbance_probability, protected_run, sequential_tomography
from .spin import X_HAT, Y_HAT, Z_HAT, direction, make_spin, pauli, pauli_component, qubit
from .tsv import TwoStateVector, spin_tsv, weak_value

EXIT_CONFIG = 2
EXIT_RUNTIME = 3
DEFAULT_SEED = 42


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        super().__init__(message)
        self.key = key
        self.line = line


# validators: raw JSON value -> checked python value


def _real(v, key):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key} must be a finite number, got {v!r}", key)
    return float(v)


def _positive(v, key):
    v = _real(v, key)
    if v <= 0:
        raise ConfigError(f"{key} must be positive, got {v}", key)
    return v


def _count(v, key):
    if isinstance(v, bool) or not isinstance(v, int) or v < 1:
        raise ConfigError(f"{key} must be a positive integer, got {v!r}", key)
    return v


def _seed(v, key):
    if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < 2**64:
        raise ConfigError(f"{key} must be an unsigned 64-bit integer, got {v!r}", key)
    return v


def _spin(v, key):
    v = _positive(v, key)
    if abs(2 * v - round(2 * v)) > 1e-12:
        raise ConfigError(f"{key} must be a multiple of 1/2, got {v}", key)
    return round(2 * v) / 2


def _direction(v, key):
    if not isinstance(v, list) or len(v) != 3:
        raise ConfigError(f"{key} must be a 3-vector [x, y, z], got {v!r}", key)
    vec = [_real(c, key) for c in v]
    try:
        direction(vec)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}", key) from None
    return vec


def _complex(v, key):
    if isinstance(v, list):
        if len(v) != 2:
            raise ConfigError(f"{key} must be a number or [re, im], got {v!r}", key)
        return complex(_real(v[0], key), _real(v[1], key))
    return complex(_real(v, key))


def _list_of(item):
    def check(v, key):
        if not isinstance(v, list) or not v:
            raise ConfigError(f"{key} must be a non-empty list", key)
        return [item(x, key) for x in v]

    return check


def _unit_interval(v, key):
    v = _real(v, key)
    if not 0 <= v < 0.5:
        raise ConfigError(f"{key} must lie in [0, 0.5), got {v}", key)
    return v


X, Y, Z = [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]

POINTER_KEYS = {"p_max": (_positive, 1.0), "n_samples": (_count, 33), "ramp_fraction": (_unit_interval, 0.1)}

SCHEMAS = {
    "weak-value": {
        "j": (_spin, 0.5),
        "pre_dir": (_direction, X),
        "post_dir": (_direction, Y),
        "xi_dir": (_direction, [1.0, 1.0, 0.0]),
    },
    "protect": {
        "lam": (_positive, 2.0),
        "N": (_spin, 20),
        "pre_dir": (_direction, X),
        "post_dir": (_direction, Y),
        "system_pre": (_direction, X),
        "system_post": (_direction, Y),
        "meas_dirs": (_list_of(_direction), [X, Y, Z]),
        "steps": (_count, 200),
        **POINTER_KEYS,
    },
    "disturbance-scan": {
        "lam": (_positive, 1.0),
        "N_values": (_list_of(_spin), [4, 8, 16, 32]),
        "p": (_real, 0.0),
        "n_times": (_count, 24),
    },
    "tomography": {
        "lam": (_positive, 5.0),
        "N": (_spin, 25),
        "system_pre": (_direction, X),
        "system_post": (_direction, Y),
        "tol": (_positive, 0.25),
        "steps": (_count, 200),
        **POINTER_KEYS,
        "p_max": (_positive, 0.5),
    },
    "adiabatic-single": {
        "omega": (_positive, 1.0),
        "field_dir": (_direction, Z),
        "obs_dir": (_direction, [1.0, 0.0, 1.0]),
        "T_values": (_list_of(_positive), [25.0, 50.0, 100.0, 200.0]),
        "steps": (_count, 400),
        **POINTER_KEYS,
        "p_max": (_positive, 0.5),
    },
    "kaon": {
        "m_L": (_real, 0.0),
        "m_S": (_real, 0.0),
        "gamma_L": (_positive, 0.002),
        "gamma_S": (_positive, 1.0),
        "epsilon": (_complex, 0.002),
        "T": (_real, 10.0),
        "draws": (lambda v, k: _seed(v, k) if v == 0 else _count(v, k), 20),
        "seed": (_seed, DEFAULT_SEED),
    },
    "spectrum": {
        "lam": (_positive, 1.0),
        "N": (_spin, 10),
        "p": (_real, 0.01),
        "T": (_positive, 1.0),
        "meas_dirs": (_list_of(_direction), [X, Y, Z]),
    },
}
SCENARIOS = tuple(SCHEMAS)
TOP_KEYS = ("scenario", "parameters", "output")
OUTPUT_KEYS = ("format", "path")
FORMATS = ("csv", "json")


def bundled_configs() -> dict[str, Path]:
    root = resources.files("tsvlab") / "configs"
    return {p.name: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def _line_of(text: str, key: str | None) -> int | None:
    if key is None:
        return None
    m = re.search(r'"' + re.escape(key) + r'"\s*:', text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_config(path: str | None, scenario: str) -> dict:
    """Parse and validate a config file; returns the fully resolved config."""
    text, raw = "{}", {}
    if path is not None:
        p = Path(path)
        if not p.exists() and path in bundled_configs():
            p = bundled_configs()[path]
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object", line=1)
    try:
        return _resolve(raw, scenario)
    except ConfigError as exc:
        if exc.line is None:
            exc.line = _line_of(text, exc.key)
        raise


def _resolve(raw: dict, scenario: str) -> dict:
    for key in raw:
        if key not in TOP_KEYS:
            raise ConfigError(f"unknown key {key!r} (allowed: {', '.join(TOP_KEYS)})", key)
    if raw.get("scenario", scenario) != scenario:
        raise ConfigError(f"config is for scenario {raw['scenario']!r}, not {scenario!r}", "scenario")
    params = raw.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("parameters must be an object", "parameters")
    schema = SCHEMAS[scenario]
    resolved = {}
    for key in params:
        if key not in schema:
            raise ConfigError(f"unknown parameter {key!r} for {scenario} (allowed: {', '.join(schema)})", key)
    for key, (check, default) in schema.items():
        resolved[key] = check(params[key], key) if key in params else default
    output = raw.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output must be an object", "output")
    for key in output:
        if key not in OUTPUT_KEYS:
            raise ConfigError(f"unknown output key {key!r} (allowed: {', '.join(OUTPUT_KEYS)})", key)
    fmt = output.get("format", "csv")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}, got {fmt!r}", "format")
    path = output.get("path")
    if path is not None and not isinstance(path, str):
        raise ConfigError("output path must be a string", "path")
    return {"scenario": scenario, "parameters": resolved, "output": {"format": fmt, "path": path}}


# scenarios: resolved parameters -> (rows, diagnostics)


def _pointer(params) -> PointerModel:
    return PointerModel.from_pmax(params["p_max"], n_samples=params["n_samples"], ramp_fraction=params["ramp_fraction"])


def _run_weak_value(params, rng):
    j = params["j"]
    tsv = spin_tsv(j, params["pre_dir"], params["post_dir"])
    # a qubit is reported in Pauli units, larger spins in units of S
    ops = pauli() if j == 0.5 else make_spin(j).components
    vals = [weak_value(s, tsv).value for s in ops]
    xi = direction(params["xi_dir"])
    along = sum(c * v for c, v in zip(xi, vals))
    row = {"j": j, "x": vals[0], "y": vals[1], "z": vals[2], "xi": along}
    return [row], {"overlap": tsv.overlap}


def _run_protect(params, rng):
    system = TwoStateVector(qubit(params["system_pre"]), qubit(params["system_post"]))
    base = ProtectionSetup(
        lam=params["lam"],
        N=params["N"],
        pre_dir=params["pre_dir"],
        post_dir=params["post_dir"],
        system_tsv=system,
        pointer=_pointer(params),
    )
    rows = []
    for xi in params["meas_dirs"]:
        setup = base.replace(meas_dir=xi)
        r = protected_run(setup, steps=params["steps"])
        rows.append(
            {
                "xi_x": setup.meas_dir[0],
                "xi_y": setup.meas_dir[1],
                "xi_z": setup.meas_dir[2],
                "reading": r.reading,
                "weak_value": setup.expected_weak_value,
                "q_shift_mean": r.q_shift_mean,
                "p_shift_mean": r.p_shift_mean,
                "postselect_prob": r.postselect_prob,
                "conditional_postselect_prob": r.extras["conditional_postselect_prob"],
                "disturbance": r.disturbance,
                "fidelity_forward": r.fidelity_forward,
                "fidelity_backward": r.fidelity_backward,
                "converged": r.converged,
            }
        )
    return rows, {"device_baseline": base.device_baseline}


def _run_disturbance_scan(params, rng):
    Ns = params["N_values"]
    probs = [
        disturbance_probability(ProtectionSetup(lam=params["lam"], N=N), p=params["p"], n_times=params["n_times"])
        for N in Ns
    ]
    slope = float(np.polyfit(np.log(Ns), np.log(probs), 1)[0]) if len(Ns) > 1 else math.nan
    rows = [{"N": N, "probability": pr, "fitted_slope": slope} for N, pr in zip(Ns, probs)]
    return rows, {"fitted_slope": slope, "monotone": bool(np.all(np.diff(probs) < 0))}


def _run_tomography(params, rng):
    target = TwoStateVector(qubit(params["system_pre"]), qubit(params["system_post"]))
    setup = ProtectionSetup(lam=params["lam"], N=params["N"], system_tsv=target, pointer=_pointer(params))
    res = sequential_tomography(setup, steps=params["steps"], tol=params["tol"])
    row = {
        "reading_x": res.readings[0],
        "reading_y": res.readings[1],
        "reading_z": res.readings[2],
        "fidelity_forward": res.fidelity_forward,
        "fidelity_backward": res.fidelity_backward,
    }
    for name, vec in (("forward", res.tsv.forward), ("backward", res.tsv.backward)):
        row[f"{name}_0"], row[f"{name}_1"] = complex(vec[0]), complex(vec[1])
    return [row], {"target_weak_values": [complex(setup.replace(meas_dir=d).expected_weak_value) for d in (X_HAT, Y_HAT, Z_HAT)]}


def _run_adiabatic_single(params, rng):
    H0 = params["omega"] * pauli_component(params["field_dir"])
    A = pauli_component(params["obs_dir"])
    _, vecs = np.linalg.eigh(H0)
    psi0 = vecs[:, 0]
    rows = []
    for T in params["T_values"]:
        ptr = PointerModel.from_pmax(params["p_max"], n_samples=params["n_samples"], ramp_fraction=params["ramp_fraction"], T=T)
        r = adiabatic_measure_single(A, H0, psi0, ptr, params["steps"])
        rows.append(
            {"T": T, "q_shift_mean": r.q_shift_mean, "expectation": r.extras["expectation"], "leakage": r.leakage, "converged": r.converged}
        )
    return rows, {}


def _run_kaon(params, rng):
    base = KaonParams(params["m_L"], params["m_S"], params["gamma_L"], params["gamma_S"], params["epsilon"])
    eps_list = [base.epsilon]
    for _ in range(params["draws"]):
        r, phi = 0.05 * np.sqrt(rng.uniform()), rng.uniform(0, 2 * np.pi)
        eps_list.append(complex(r * np.cos(phi), r * np.sin(phi)))
    rows = []
    for k, eps in enumerate(eps_list):
        kp = KaonParams(base.m_L, base.m_S, base.gamma_L, base.gamma_S, eps)
        chk = kaon_overlap_check(kp)
        run = survival_postselected_run(kp, [1.0, 0.0], params["T"])
        rows.append(
            {
                "draw": k,
                "epsilon": eps,
                "mixing": chk.mixing,
                "forward_backward_overlap": chk.forward_backward_overlap,
                "predicted": chk.predicted,
                "unit_overlap": chk.unit_overlap,
                "survival": run.survival,
                "K_L_branch_prob": float(branch_probabilities(run)[0]),
            }
        )
    worst = max(abs(r["forward_backward_overlap"] - r["predicted"]) for r in rows)
    return rows, {"max_relation_residual": worst, "K_L": kaon_kets(base)[0], "K_S": kaon_kets(base)[1]}


def _run_spectrum(params, rng):
    N = params["N"]
    H0 = effective_protector(params["lam"], (N, N, 1j * N))
    rows = []
    for xi in params["meas_dirs"]:
        V = (params["p"] / params["T"]) * pauli_component(xi)
        H = add_measurement_term(H0, params["p"], params["T"], xi=xi)
        exact = BiorthogonalSystem.decompose(H)
        approx = first_order_eigenvalues(H0, V)
        for k, (w, w1) in enumerate(zip(exact.omegas, approx)):
            rows.append(
                {
                    "xi_x": direction(xi)[0],
                    "xi_y": direction(xi)[1],
                    "xi_z": direction(xi)[2],
                    "branch": k,
                    "exact": complex(w),
                    "first_order": complex(w1),
                    "residual": abs(w - w1),
                    "reading": exact.branch_weak_value(pauli_component(xi), k),
                }
            )
    return rows, {"unperturbed": [complex(w) for w in BiorthogonalSystem.decompose(H0).omegas]}


RUNNERS = {
    "weak-value": _run_weak_value,
    "protect": _run_protect,
    "disturbance-scan": _run_disturbance_scan,
    "tomography": _run_tomography,
    "adiabatic-single": _run_adiabatic_single,
    "kaon": _run_kaon,
    "spectrum": _run_spectrum,
}


def run_scenario(config: dict, seed: int = DEFAULT_SEED, steps: int | None = None):
    """Execute a resolved config; returns (rows, diagnostics)."""
    params = dict(config["parameters"])
    if steps is not None:
        if "steps" not in params:
            raise ConfigError(f"--steps does not apply to {config['scenario']}")
        params["steps"] = steps
    rng = np.random.default_rng(seed)
    return RUNNERS[config["scenario"]](params, rng)


# serialization


def _jsonable(v):
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _flatten(row: dict) -> dict:
    out = {}
    for k, v in row.items():
        if isinstance(v, (complex, np.complexfloating)):
            out[f"{k}_re"], out[f"{k}_im"] = _cell(v.real), _cell(v.imag)
        else:
            out[k] = _cell(v)
    return out


def render(config: dict, rows, diagnostics, seed: int, fmt: str) -> str:
    echoed = {**config, "seed": seed}
    if fmt == "json":
        doc = {"config": _jsonable(echoed), "results": _jsonable(rows), "diagnostics": _jsonable(diagnostics)}
        return json.dumps(doc, indent=2, sort_keys=False, allow_nan=True) + "\n"
    buf = io.StringIO()
    meta = [
        f"# tsv-lab {__version__}",
        f"# config: {json.dumps(_jsonable(echoed), sort_keys=True)}",
        f"# diagnostics: {json.dumps(_jsonable(diagnostics), sort_keys=True)}",
    ]
    buf.write("\r\n".join(meta) + "\r\n")
    flat = [_flatten(r) for r in rows]
    writer = csv.DictWriter(buf, fieldnames=list(flat[0]) if flat else [])
    writer.writeheader()
    writer.writerows(flat)
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsv-lab", description="Two-state-vector simulation scenarios.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--list-configs", action="store_true", help="list bundled example configs and exit")
    parser.add_argument("scenario", nargs="?", choices=SCENARIOS)
    parser.add_argument("--config", help="JSON config file, or the name of a bundled config")
    parser.add_argument("--output", help="output file (default: config output.path, else stdout)")
    parser.add_argument("--format", choices=FORMATS, help="output format (default: config output.format, else csv)")
    parser.add_argument("--seed", type=int, help=f"RNG seed (default: config seed, else {DEFAULT_SEED})")
    parser.add_argument("--steps", type=int, help="override the integration step count")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_configs:
        for name in sorted(bundled_configs()):
            print(name)
        return 0
    if args.scenario is None:
        parser.error("a scenario is required")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        parser.error("--seed must be an unsigned 64-bit integer")
    if args.steps is not None and args.steps < 1:
        parser.error("--steps must be >= 1")
    try:
        config = load_config(args.config, args.scenario)
        seed = args.seed if args.seed is not None else config["parameters"].get("seed", DEFAULT_SEED)
        rows, diagnostics = run_scenario(config, seed=seed, steps=args.steps)
    except ConfigError as exc:
        where = f"{args.config}:{exc.line}: " if exc.line is not None and args.config else ""
        print(f"tsv-lab {args.scenario}: config error: {where}{exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TSVError, ValueError, FloatingPointError, RuntimeError) as exc:
        print(f"tsv-lab {args.scenario}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.steps is not None:
        config["parameters"]["steps"] = args.steps
    fmt = args.format or config["output"]["format"]
    text = render(config, rows, diagnostics, seed, fmt)
    target = args.output or config["output"]["path"]
    if target:
        Path(target).write_text(text, newline="")
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
