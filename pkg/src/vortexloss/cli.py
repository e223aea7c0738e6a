"""Command-line interface.

    vortexloss model        evaluate S(T), S'(T) on a temperature grid
    vortexloss extract      reduce a directory of decay traces to a Q0 table
    vortexloss sensitivity  subtract a reference cooldown -> sensitivity curve
    vortexloss fit          simultaneous fit of several sensitivity curves
    vortexloss predict-t1   photon lifetime bounds vs trapped field
    vortexloss synth        write synthetic datasets with known truth

Exit codes: 0 success, 1 data error, 2 usage or configuration error.
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import build_section, load_run_config
from .exceptions import ConfigError, DataError, VortexLossError
from .fitting import fit_simultaneous, predict_curves
from .io import (
    read_decay_trace,
    read_json,
    read_qdataset,
    read_sensitivity_curve,
    write_decay_trace,
    write_json,
    write_qdataset,
    write_sensitivity_curve,
    write_table,
)
from .model import REFERENCE_PINNING, MaterialParams, PinningParams, sensitivity_model, t1_bound
from .pipeline import extract_sensitivity, reduce_traces
from .synth import SynthSpec, generate_decay, generate_qdatasets, generate_sensitivity_curves
from .units import mg_to_tesla, to_nohm_per_mg

logger = logging.getLogger("vortexloss")

DEFAULT_Q_OX0 = 9.42e8
DEFAULT_S_NOHM_PER_MG = 2.0

MODEL_COLUMNS = (
    "dataset", "temperature_k", "s_ohm_per_t", "sprime_ohm_per_t",
    "s_nohm_per_mg", "sprime_nohm_per_mg",
)


def load_pinning(path):
    """Pinning parameters from a fit report or a flat ``{omega0, alpha, F}`` file."""
    if path is None:
        return list(REFERENCE_PINNING)
    obj = read_json(path)
    params = obj.get("params", obj)
    try:
        omega0 = params.get("omega0_rad_s", params.get("omega0"))
        alpha = params.get("alpha_per_k", params.get("alpha"))
        F = params.get("f", params.get("F", 1.0))
        lengths = [len(v) for v in (omega0, alpha, F) if isinstance(v, list)]
        n = max(lengths, default=1)

        def pick(v, k):
            return float(v[k]) if isinstance(v, list) else float(v)

        return [PinningParams(pick(omega0, k), pick(alpha, k), pick(F, k)) for k in range(n)]
    except (TypeError, ValueError, IndexError, AttributeError) as exc:
        raise DataError(f"{path}: cannot read pinning parameters ({exc})") from None


def model_table(params, mp, t_grid):
    cols = [[] for _ in MODEL_COLUMNS]
    for k, cs in enumerate(predict_curves(params, mp, t_grid)):
        s = np.asarray(cs.s) * np.ones_like(t_grid)
        sp = np.asarray(cs.s_prime) * np.ones_like(t_grid)
        for col, values in zip(
            cols,
            (np.full(t_grid.size, k), t_grid, s, sp, to_nohm_per_mg(s), to_nohm_per_mg(sp)),
        ):
            col.extend(values)
    return cols


def cmd_model(args, cfg):
    params = load_pinning(args.params)
    t_grid = np.linspace(args.t_min, args.t_max, args.n)
    out = cfg.resolve_output(args.out)
    write_table(out, MODEL_COLUMNS, model_table(params, cfg.material, t_grid))
    s0 = sensitivity_model(args.t_min, None, cfg.material, params[0])
    print(f"S({args.t_min:g} K) = {to_nohm_per_mg(s0.s):.4g} nOhm/mG -> {out}")


def cmd_extract(args, cfg):
    decay_dir = Path(args.decays)
    if not decay_dir.is_dir():
        raise DataError(f"{decay_dir}: not a directory")
    files = sorted(decay_dir.glob("*.csv"))
    if not files:
        raise DataError(f"{decay_dir}: no decay trace files (*.csv)")
    with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
        traces = list(pool.map(read_decay_trace, files))
    opts = cfg.pipeline
    q1 = args.q1 if args.q1 is not None else opts.q1
    ds = reduce_traces(
        traces,
        q1,
        cooldown_id=args.cooldown_id,
        b_trap=mg_to_tesla(args.b_trap_mg),
        b_trap_err=mg_to_tesla(args.b_trap_err_mg),
        window=args.window or opts.window,
        cal=opts.cal,
        bins_per_decade=opts.bins_per_decade,
    )
    out = cfg.resolve_output(args.out)
    write_qdataset(out, ds, {"q1": q1, "source": str(decay_dir), "n_traces": len(traces)})
    print(f"{len(ds)} rows from {len(traces)} traces -> {out}")


def cmd_sensitivity(args, cfg):
    ref = read_qdataset(args.ref)
    flux = read_qdataset(args.flux)
    opts = cfg.pipeline
    curve = extract_sensitivity(
        ref, flux, cfg.material,
        temp_tol=opts.temp_tol_k if args.temp_tol is None else args.temp_tol,
        bins_per_decade=opts.bins_per_decade,
        interpolate=opts.interpolate or args.interpolate,
    )
    out = cfg.resolve_output(args.out)
    write_sensitivity_curve(out, curve)
    s = to_nohm_per_mg(curve.s)
    print(
        f"{len(curve)} points, S from {s.min():.4g} to {s.max():.4g} nOhm/mG "
        f"(B_trap = {curve.b_trap / 1e-7:.4g} mG) -> {out}"
    )


def cmd_fit(args, cfg):
    curves = [read_sensitivity_curve(p) for p in args.curves]
    result = fit_simultaneous(curves, cfg.material, cfg.fit)
    report = result.to_report()
    out = cfg.resolve_output(args.out)
    write_json(out, report)
    t_all = np.concatenate([c.temperature for c in curves])
    t_grid = np.linspace(t_all.min(), t_all.max(), 200)
    pred_path = out.with_name(out.stem + ".curves.csv")
    write_table(pred_path, MODEL_COLUMNS, model_table(result.pinning_params(), cfg.material, t_grid))
    p, u = report["params"], report["uncertainties"]
    print(f"omega0 = {p['omega0_rad_s']} +/- {u['omega0_rad_s']} rad/s")
    print(f"alpha  = {p['alpha_per_k']} +/- {u['alpha_per_k']} 1/K")
    print(f"F      = {p['f']} +/- {u['f']}")
    print(f"chi2_red = {result.chi2_reduced:.4g}, converged = {result.converged} -> {out}")
    if not result.converged:
        logger.warning("fit did not converge within %d iterations", cfg.fit.max_iter)


def _parse_q_ox0(text):
    if text.strip().lower() in ("absent", "none", "inf"):
        return None
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'absent', got {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError("q-ox0 must be > 0")
    return value


def cmd_predict_t1(args, cfg):
    b_mg = np.asarray(args.b_trap, dtype=float)
    if np.any(b_mg < 0):
        raise DataError("trapped field must be >= 0")
    if args.params is not None and args.s_nohm_per_mg is None:
        pp = load_pinning(args.params)[0]
        s = float(sensitivity_model(args.temperature, None, cfg.material, pp).s)
    else:
        s_disp = DEFAULT_S_NOHM_PER_MG if args.s_nohm_per_mg is None else args.s_nohm_per_mg
        s = s_disp * 1e-2
    b = mg_to_tesla(b_mg)
    free = np.atleast_1d(t1_bound(None, s, b, cfg.material))
    columns = ["b_trap_mg", "b_trap_t", "t1_oxide_free_s", "t1_oxide_free_ms"]
    data = [b_mg, b, free, free * 1e3]
    if args.q_ox0 is not None:
        ox = np.atleast_1d(t1_bound(args.q_ox0, s, b, cfg.material))
        columns += ["t1_oxide_s", "t1_oxide_ms"]
        data += [ox, ox * 1e3]
    out = cfg.resolve_output(args.out)
    write_table(out, columns, data)
    print(f"S = {to_nohm_per_mg(s):.4g} nOhm/mG, q_ox0 = {args.q_ox0} -> {out}")


SYNTH_KEYS = {
    "seed", "noise_rel", "sigma_rel", "temperatures_k", "b_trap_mg", "pinning",
    "field_v_per_m", "material", "q_ref", "outputs", "decay",
}
DECAY_KEYS = {"q_loaded", "f0_hz", "p0_w", "n_samples", "noise_rel", "temperature_k"}


def _synth_spec(obj, where):
    unknown = sorted(set(obj) - SYNTH_KEYS)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown key")
    try:
        temps = obj.get("temperatures_k", {"min": 0.01, "max": 1.3, "n": 25})
        if isinstance(temps, dict):
            temps = np.linspace(float(temps["min"]), float(temps["max"]), int(temps["n"]))
        b_mg = [float(b) for b in obj.get("b_trap_mg", [50.0, 100.0, 250.0])]
        pin = obj.get("pinning", {})
        if set(pin) - {"omega0_rad_s", "alpha_per_k", "f"}:
            bad = sorted(set(pin) - {"omega0_rad_s", "alpha_per_k", "f"})[0]
            raise ConfigError(f"{where}.pinning.{bad}: unknown key")
        F = pin.get("f", [pp.F for pp in REFERENCE_PINNING])
        F = F if isinstance(F, list) else [F] * len(b_mg)
        if len(F) != len(b_mg):
            raise ConfigError(f"{where}.pinning.f: need one value per b_trap_mg entry")
        pinning = [
            PinningParams(float(pin.get("omega0_rad_s", 2.22e10)),
                          float(pin.get("alpha_per_k", 0.701)), float(f))
            for f in F
        ]
        material = build_section(MaterialParams, obj.get("material"), f"{where}.material")
        return SynthSpec(
            pinning=pinning,
            b_trap=[mg_to_tesla(b) for b in b_mg],
            temperatures=temps,
            material=material,
            noise_rel=float(obj.get("noise_rel", 0.0)),
            sigma_rel=None if obj.get("sigma_rel") is None else float(obj["sigma_rel"]),
            seed=int(obj.get("seed", 0)),
            field_v_per_m=float(obj.get("field_v_per_m", 50.0)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, VortexLossError) as exc:
        raise ConfigError(f"{where}: invalid synthetic spec ({exc})") from None


def cmd_synth(args, cfg):
    try:
        obj = read_json(args.spec)
    except DataError as exc:
        raise ConfigError(str(exc)) from None
    spec = _synth_spec(obj, str(args.spec))
    outputs = obj.get("outputs", ["curves", "qdatasets"])
    if not isinstance(outputs, list) or set(outputs) - {"curves", "qdatasets", "decays"}:
        raise ConfigError(f"{args.spec}.outputs: expected a subset of curves, qdatasets, decays")
    out = cfg.resolve_output(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "curves" in outputs:
        for curve in generate_sensitivity_curves(spec):
            path = out / f"curve_{curve.cooldown_id}.csv"
            write_sensitivity_curve(path, curve)
            written.append(path)
    if "qdatasets" in outputs:
        ref, fluxes = generate_qdatasets(spec, float(obj.get("q_ref", 5e9)))
        write_qdataset(out / f"qdataset_{ref.cooldown_id}.csv", ref, {"truth": {"q_ref": obj.get("q_ref", 5e9)}})
        written.append(out / f"qdataset_{ref.cooldown_id}.csv")
        for k, ds in enumerate(fluxes):
            path = out / f"qdataset_{ds.cooldown_id}.csv"
            write_qdataset(path, ds, {"truth": spec.truth(k)})
            written.append(path)
    if "decays" in outputs:
        dec = obj.get("decay", {})
        if not isinstance(dec, dict) or set(dec) - DECAY_KEYS:
            raise ConfigError(f"{args.spec}.decay: unknown key(s) {sorted(set(dec) - DECAY_KEYS)}")
        q_values = dec.get("q_loaded", [1e9])
        q_values = q_values if isinstance(q_values, list) else [q_values]
        for k, q in enumerate(q_values):
            trace = generate_decay(
                float(q), float(dec.get("f0_hz", spec.material.f0)),
                p0=float(dec.get("p0_w", 1e-12)),
                noise_rel=float(dec.get("noise_rel", spec.noise_rel)),
                seed=spec.seed + k,
                temperature=float(dec.get("temperature_k", 0.01 * (k + 1))),
                n_samples=int(dec.get("n_samples", 2000)),
                label=f"trace_{k:03d}",
            )
            path = out / "decays" / f"trace_{k:03d}.csv"
            write_decay_trace(path, trace)
            written.append(path)
    print(f"{len(written)} files written to {out}")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS so a subcommand does not reset values given before it
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="log progress")

    parser = argparse.ArgumentParser(
        prog="vortexloss",
        description="Trapped-vortex loss modelling, data reduction and fitting.",
        parents=[common],
    )
    parser.add_argument("--version", action="store_true", help="print version and constants")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("model", parents=[common], help="evaluate S and S' vs temperature")
    p.add_argument("--params", help="fit report or {omega0, alpha, F} JSON (default: reference niobium values)")
    p.add_argument("--t-min", type=float, default=0.01)
    p.add_argument("--t-max", type=float, default=1.3)
    p.add_argument("--n", type=int, default=130)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("extract", parents=[common], help="decay traces -> Q0 table")
    p.add_argument("--decays", required=True, help="directory of trace CSV + JSON files")
    p.add_argument("--q1", type=float, default=None, help="coupling Q (default 1.4e9)")
    p.add_argument("--out", required=True)
    p.add_argument("--cooldown-id", default="CD")
    p.add_argument("--b-trap-mg", type=float, default=0.0)
    p.add_argument("--b-trap-err-mg", type=float, default=0.0)
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("sensitivity", parents=[common], help="reference + flux Q0 -> S, S'")
    p.add_argument("--ref", required=True)
    p.add_argument("--flux", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--temp-tol", type=float, default=None, help="matching tolerance (K)")
    p.add_argument("--interpolate", action="store_true")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("fit", parents=[common], help="simultaneous fit of sensitivity curves")
    p.add_argument("--curves", nargs="+", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict-t1", parents=[common], help="T1 bound vs trapped field")
    p.add_argument("--q-ox0", type=_parse_q_ox0, default=DEFAULT_Q_OX0,
                   help="oxide-limited Q0, or 'absent'")
    p.add_argument("--b-trap", type=float, nargs="+", required=True, help="trapped field (mG)")
    p.add_argument("--params", help="take S from the model at --temperature")
    p.add_argument("--temperature", type=float, default=0.01)
    p.add_argument("--s-nohm-per-mg", type=float, default=None,
                   help=f"resistive sensitivity (default {DEFAULT_S_NOHM_PER_MG})")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict_t1)

    p = sub.add_parser("synth", parents=[common], help="write synthetic datasets")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def _print_version(cfg):
    print(f"vortexloss {__version__}")
    mp = cfg.material
    print(f"rho_n    = {mp.rho_n:g} Ohm m")
    print(f"bc2_0    = {mp.bc2_0:g} T")
    print(f"tc       = {mp.tc:g} K")
    print(f"lambda_L = {mp.lambda_L:g} m")
    print(f"G        = {mp.G:g} Ohm")
    print(f"f0       = {mp.f0:g} Hz")
    print(f"q1       = {cfg.pipeline.q1:g}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_run_config(getattr(args, "config", None))
        if args.version:
            _print_version(cfg)
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VortexLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
