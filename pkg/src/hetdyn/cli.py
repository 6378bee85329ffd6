"""Batch driver: design targets, run certification suites, train, simulate, analyze.

Exit codes: 0 success, 2 precondition violation, 3 numeric failure,
4 property-suite failure.  Every artifact embeds the resolved run
configuration and a build stamp; figures are regenerated verbatim from the
report JSON alone.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_NUMERIC = 3
EXIT_SUITE = 4

_PROFILES = {
    "desk": {"D": 100_000, "epochs": 600},
    "paper": {"D": 1_000_000, "epochs": 600},
}


def _build_stamp() -> str:
    here = Path(__file__).resolve()
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=here.parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"hetdyn-{out.stdout.strip()}"
    except Exception:
        pass
    from . import __version__
    return f"hetdyn-v{__version__}"


def _write_json(path: Path, payload: dict, run_config: dict):
    body = dict(payload)
    body["run_config"] = run_config
    body["build_stamp"] = run_config.get("build_stamp", _build_stamp())
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2)
        fh.write("\n")


def _resolve(args: argparse.Namespace, parser_defaults: dict) -> dict:
    """defaults < config file < explicit flags, flattened into one dict."""
    merged = dict(parser_defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path) as fh:
            merged.update(json.load(fh))
    for key, value in vars(args).items():
        if key in ("config", "func"):
            continue
        if value is not None:
            merged[key] = value
    merged["build_stamp"] = _build_stamp()
    return merged


def _parse_vec(text, length=3):
    vals = [float(v) for v in str(text).split(",")]
    if len(vals) == 1:
        vals = vals * length
    if len(vals) != length:
        raise ValueError(f"expected {length} comma-separated values, got {text!r}")
    return vals


# ---------------------------------------------------------------------------
# subcommands


def cmd_design(args, defaults):
    import numpy as np
    from .lv import build_lv, is_competitive

    cfg = _resolve(args, defaults)
    a = _parse_vec(cfg["a"])
    lam = _parse_vec(cfg["lambda_u"])
    system = build_lv(a, lam)
    nu, nu_prod, stable = system.saddle_values()
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "lv_system.json").write_text(system.to_json() + "\n")
    report = {
        "a": list(map(float, a)),
        "lambda_u": list(map(float, lam)),
        "saddle_values": [float(v) for v in nu],
        "saddle_value_product": nu_prod,
        "stable_cycle": bool(stable),
        "competitive": bool(is_competitive(system.field())),
        "eigenvalues_at_saddles": [
            [float(v) for v in system.jacobian_eigenstructure(i)[0]] for i in range(3)
        ],
    }
    _write_json(out / "stability_report.json", report, cfg)
    print(f"designed cycle: nu(Gamma) = {nu_prod:.4f} "
          f"({'stable' if stable else 'NOT stable'}); wrote {out}/lv_system.json")
    return EXIT_OK


def cmd_verify(args, defaults):
    from dataclasses import asdict
    from .nfield import run_lyapunov_suite, run_perturbation_suite, run_spectral_suite

    cfg = _resolve(args, defaults)
    n = int(cfg["n"])
    draws = int(cfg["draws"])
    seed = int(cfg["seed"])
    out = Path(cfg["out"])
    which = cfg["suite"]
    results = {}
    ok = True
    if draws > 0:
        if which in ("all", "lyapunov"):
            r = run_lyapunov_suite(n, draws, seed,
                                   trajectories=int(cfg["trajectories"]),
                                   points=int(cfg["points"]))
            results["lyapunov"] = asdict(r)
            ok = ok and r.passed
        if which in ("all", "spectral"):
            r = run_spectral_suite(n, draws, seed)
            results["spectral"] = asdict(r)
            ok = ok and r.passed
        if which in ("all", "perturbation"):
            r = run_perturbation_suite(n, draws, seed)
            results["perturbation"] = asdict(r)
            ok = ok and r.passed
    _write_json(out / "verify_report.json", {"n": n, "draws": draws, "seed": seed,
                                             "results": results, "passed": bool(ok)}, cfg)
    for name, res in results.items():
        print(f"{name}: {'pass' if res['passed'] else 'FAIL'}")
    if not results:
        print("no draws requested: empty report")
    return EXIT_OK if ok else EXIT_SUITE


def cmd_train(args, defaults):
    import numpy as np
    from .approx import TrainConfig, init_network, sample_dataset, train
    from .lv import LotkaVolterraSystem, build_lv

    cfg = _resolve(args, defaults)
    if cfg.get("profile"):
        for key, value in _PROFILES[cfg["profile"]].items():
            if vars(args).get(key) is None:
                cfg[key] = value
    if cfg.get("target"):
        system = LotkaVolterraSystem.from_json(Path(cfg["target"]).read_text())
    else:
        system = build_lv(_parse_vec(cfg["a"]), _parse_vec(cfg["lambda_u"]))
    seed = int(cfg["seed"])
    blocks = None
    if cfg["blocks"]:
        blocks = tuple(int(v) for v in str(cfg["blocks"]).split(","))
    box = [(float(cfg["box_lo"]), float(cfg["box_hi"]))] * 3
    tc = TrainConfig(D=int(cfg["D"]), box=box, lr=float(cfg["lr"]),
                     batch=int(cfg["batch"]), epochs=int(cfg["epochs"]), seed=seed,
                     orthant_hinge_weight=4.0 if cfg["orthant_hinge"] else 0.0,
                     jacobian_penalty_weight=float(cfg["jacobian_penalty"]))
    X, Y = sample_dataset(system.field(), box, tc.D, seed)
    net0 = init_network(3, int(cfg["width"]), blocks, seed=seed + 1,
                        sigma_kind=cfg["activation"])
    net, result = train(net0, (X, Y), tc, target_field=system.field())
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "checkpoint.json").write_text(net.to_json(seed=seed, config=tc.to_dict()) + "\n")
    with open(out / "loss_trace.csv", "w") as fh:
        fh.write("epoch,train_mse,val_mse\n")
        for k, tl in enumerate(result.loss_trace):
            vl = result.val_trace[k] if k < len(result.val_trace) else ""
            fh.write(f"{k},{tl!r},{vl!r}\n")
    _write_json(out / "train_report.json", {
        "target": {"a": system.a.tolist(), "lambda_u": system.lambda_u.tolist()},
        "final_train_mse": result.final_train_mse,
        "epochs_run": result.stopped_epoch,
        "train_config": tc.to_dict(),
    }, cfg)
    print(f"trained: final MSE {result.final_train_mse:.3e} "
          f"({result.stopped_epoch} epochs); wrote {out}/checkpoint.json")
    return EXIT_OK


def cmd_simulate(args, defaults):
    import numpy as np
    from .integrate import IntegratorConfig, crossings_to_json, detect_crossings, integrate, trajectory_to_csv
    from .lv import LotkaVolterraSystem
    from .approx import ApproxNetwork
    from . import pipeline

    cfg = _resolve(args, defaults)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    t_max = float(cfg["t_max"])
    if cfg.get("checkpoint"):
        net, _ = ApproxNetwork.from_json(Path(cfg["checkpoint"]).read_text())
        system = LotkaVolterraSystem.from_json(Path(cfg["target"]).read_text())
        ref = pipeline.reference_orbit(system, t_max=min(t_max, 400.0))
        section = pipeline.target_section(system, ref)
        start = section.point if cfg.get("x0") is None else _parse_vec(cfg["x0"])
        traj = pipeline.net_orbit(net, start, t_max=t_max)
        crossings = detect_crossings(traj, section)
    else:
        system = LotkaVolterraSystem.from_json(Path(cfg["target"]).read_text())
        ref = pipeline.reference_orbit(system, t_max=t_max)
        section = pipeline.target_section(system, ref)
        traj = ref
        crossings = detect_crossings(traj, section)
    trajectory_to_csv(traj, out / "trajectory.csv")
    (out / "events.json").write_text(crossings_to_json(crossings) + "\n")
    _write_json(out / "simulate_report.json", {
        "t_max": t_max,
        "steps": len(traj.times),
        "crossings": len(crossings),
    }, cfg)
    print(f"simulated {len(traj.times)} nodes, {len(crossings)} section crossings; wrote {out}/trajectory.csv")
    return EXIT_OK


def _plots_from_report(report: dict, out: Path):
    from . import svgplot

    series = report["series"]
    t = series["t"]
    X = series["x"]
    n = len(X[0]) if X else 0
    cols = [[row[i] for row in X] for i in range(n)]
    ts_svg = svgplot.line_chart([(t, c) for c in cols],
                                labels=[f"x{i+1}" for i in range(n)],
                                title="learned dynamics", xlabel="t", ylabel="x")
    (out / "timeseries.svg").write_text(ts_svg)
    if n >= 2:
        orbit_svg = svgplot.line_chart([(cols[0], cols[1])], title="orbit projection",
                                       xlabel="x1", ylabel="x2")
        (out / "orbit2d.svg").write_text(orbit_svg)
    if report.get("block_means"):
        hm = svgplot.heatmap(report["block_means"], labels=["1", "2", "3"],
                             title="block-mean connectivity")
        (out / "blockmeans.svg").write_text(hm)


def cmd_analyze(args, defaults):
    import numpy as np
    from .approx import ApproxNetwork
    from .lv import LotkaVolterraSystem
    from . import pipeline

    cfg = _resolve(args, defaults)
    ckpt_path = Path(cfg["checkpoint"])
    if not ckpt_path.exists():
        print(f"checkpoint not found: {ckpt_path}", file=sys.stderr)
        return EXIT_PRECONDITION
    net, meta = ApproxNetwork.from_json(ckpt_path.read_text())
    system = LotkaVolterraSystem.from_json(Path(cfg["target"]).read_text())
    run = pipeline.analyze_network(net, system, t_max=float(cfg["t_max"]),
                                   residence_radius=float(cfg["residence_radius"]),
                                   tube_radius=float(cfg["tube_radius"]))
    body = pipeline.run_report_dict(run)
    body["run_id"] = cfg.get("run_id") or ckpt_path.stem
    body["seed"] = meta.get("seed")
    body["target_params"] = {"a": system.a.tolist(), "lambda_u": system.lambda_u.tolist()}
    body["net_checkpoint_ref"] = str(ckpt_path)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "analysis_report.json", body, cfg)
    with open(out / "crossings.csv", "w") as fh:
        fh.write("k,t\n")
        for k, t in enumerate(run.record.crossing_times):
            fh.write(f"{k},{t!r}\n")
    if cfg["plots"]:
        report = json.loads((out / "analysis_report.json").read_text())
        _plots_from_report(report, out)
    msg = (f"period {run.converged_period:.4f}" if run.converged_period is not None
           else "no period convergence")
    print(f"analysis: {msg}, tube fraction {run.tube_fraction:.3f}; wrote {out}/analysis_report.json")
    return EXIT_OK


def cmd_report(args, defaults):
    cfg = _resolve(args, defaults)
    report_path = Path(cfg["report"])
    if not report_path.exists():
        print(f"report not found: {report_path}", file=sys.stderr)
        return EXIT_PRECONDITION
    report = json.loads(report_path.read_text())
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _plots_from_report(report, out)
    print(f"regenerated figures in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _make_parser():
    top = argparse.ArgumentParser(prog="hetdyn",
                                  description="heteroclinic targets, neural-field certificates, learned approximations")
    sub = top.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with defaults for this subcommand")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")

    p = sub.add_parser("design", help="build a target system and its stability report")
    common(p)
    p.add_argument("--a", default=None, help="axis intercepts, comma separated (default 1,1,1)")
    p.add_argument("--lambda-u", dest="lambda_u", default=None, help="unstable rates, comma separated")
    p.set_defaults(func=cmd_design,
                   defaults={"a": "1,1,1", "lambda_u": "0.6,0.6,0.6", "out": "out/design", "seed": 0})

    p = sub.add_parser("verify", help="run the neural-field property suites")
    common(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--draws", type=int, default=None)
    p.add_argument("--suite", choices=["all", "lyapunov", "spectral", "perturbation"], default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--trajectories", type=int, default=None)
    p.set_defaults(func=cmd_verify,
                   defaults={"n": 3, "draws": 20, "seed": 0, "suite": "all", "points": 200,
                             "trajectories": 3, "out": "out/verify"})

    p = sub.add_parser("train", help="fit the one-hidden-layer approximator to a target")
    common(p)
    p.add_argument("--target", default=None, help="lv_system.json from `design`")
    p.add_argument("--a", default=None)
    p.add_argument("--lambda-u", dest="lambda_u", default=None)
    p.add_argument("--profile", choices=sorted(_PROFILES), default=None)
    p.add_argument("--D", type=int, default=None, help="dataset size")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--blocks", default=None, help="read-out block sizes, comma separated")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--activation", choices=["tanh", "scaled_logistic"], default=None)
    p.add_argument("--box-lo", dest="box_lo", type=float, default=None)
    p.add_argument("--box-hi", dest="box_hi", type=float, default=None)
    p.add_argument("--orthant-hinge", dest="orthant_hinge", action="store_true", default=None,
                   help="penalize outflow through the coordinate faces (for periodic-orbit studies)")
    p.add_argument("--jacobian-penalty", dest="jacobian_penalty", type=float, default=None)
    p.set_defaults(func=cmd_train,
                   defaults={"a": "1,1,1", "lambda_u": "0.6,0.6,0.6", "D": 30_000, "width": 45,
                             "blocks": "15,15,15", "epochs": 300, "batch": 1024, "lr": 1e-2,
                             "activation": "tanh", "box_lo": 0.0, "box_hi": 1.0,
                             "orthant_hinge": False, "jacobian_penalty": 0.0,
                             "seed": 0, "out": "out/train", "profile": None, "target": None})

    p = sub.add_parser("simulate", help="integrate a target or a checkpoint; dump trajectory and events")
    common(p)
    p.add_argument("--target", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--x0", default=None, help="start state, comma separated")
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.set_defaults(func=cmd_simulate,
                   defaults={"t_max": 400.0, "out": "out/simulate", "seed": 0, "x0": None,
                             "checkpoint": None})

    p = sub.add_parser("analyze", help="periodic-orbit analysis of a trained checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--t-max", dest="t_max", type=float, default=None)
    p.add_argument("--residence-radius", dest="residence_radius", type=float, default=None)
    p.add_argument("--tube-radius", dest="tube_radius", type=float, default=None)
    p.add_argument("--plots", action="store_true", default=None)
    p.add_argument("--run-id", dest="run_id", default=None)
    p.set_defaults(func=cmd_analyze,
                   defaults={"t_max": 400.0, "residence_radius": 0.25, "tube_radius": 0.15,
                             "plots": False, "out": "out/analyze", "seed": 0, "run_id": None})

    p = sub.add_parser("report", help="regenerate figures from an analysis report JSON")
    common(p)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_report, defaults={"out": "out/report", "seed": 0})
    return top


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    # honor --threads before numpy initializes its thread pools
    if "--threads" in argv:
        try:
            cap = argv[argv.index("--threads") + 1]
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ.setdefault(var, cap)
        except IndexError:
            pass
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PRECONDITION if exc.code not in (0, None) else 0
    try:
        return args.func(args, args.defaults)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
