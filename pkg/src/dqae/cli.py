"""Command-line front end.

Every command writes its main artifact to ``--out`` and a manifest next to
it (``<out>.manifest.json``) holding the fully resolved configuration.
Passing a manifest back via ``--config`` reruns the same computation.

Exit codes: 0 success/converged, 1 usage error, 2 not converged (or a
failed self-test), 3 infeasible request.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- helpers ---------------------------------------------------------------------


def _int_range(text: str) -> list:
    """``"4:10"`` -> 4..10 inclusive; ``"4,6,8"`` -> list."""
    text = str(text)
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        step = parts[2] if len(parts) > 2 else 1
        return list(range(parts[0], parts[1] + 1, step))
    return [int(p) for p in text.split(",") if p]


def _floats(text) -> list:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [float(p) for p in str(text).split(",") if p]


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def load_schema(name: str) -> dict:
    """JSON schema shipped with the package (``dataset``, ``model``, ``manifest``, ...)."""
    text = resources.files("dqae").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def _manifest(args, config: dict, outputs: Sequence[Path], extra: Optional[dict] = None) -> Path:
    out = Path(args.out)
    man = {"tool": "dqae", "version": __version__, "command": args.command,
           "config": config, "outputs": [str(p) for p in outputs]}
    if extra:
        man["results"] = extra
    path = out.with_name(out.name + ".manifest.json")
    _write(path, json.dumps(man, indent=1, sort_keys=True) + "\n")
    return path


def _svg_lines(series: dict, path: Path, xlabel: str = "", ylabel: str = "", logy: bool = False) -> None:
    """Minimal SVG line chart: ``series`` maps label -> (x, y)."""
    w, h, pad = 480, 320, 48
    xs = np.concatenate([np.asarray(v[0], float) for v in series.values()])
    ys = np.concatenate([np.asarray(v[1], float) for v in series.values()])
    if logy:
        ys = np.log10(np.maximum(ys, 1e-300))
    x0, x1 = xs.min(), xs.max() if xs.max() > xs.min() else xs.min() + 1
    y0, y1 = ys.min(), ys.max() if ys.max() > ys.min() else ys.min() + 1
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
             f'<rect x="{pad}" y="{pad // 2}" width="{w - 1.5 * pad}" height="{h - 1.5 * pad}" '
             'fill="none" stroke="black"/>']
    for i, (label, (x, y)) in enumerate(series.items()):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if logy:
            y = np.log10(np.maximum(y, 1e-300))
        px = pad + (x - x0) / (x1 - x0) * (w - 1.5 * pad)
        py = h - pad - (y - y0) / (y1 - y0) * (h - 1.5 * pad)
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px, py))
        col = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{col}" points="{pts}"/>')
        parts.append(f'<text x="{w - pad * 2.5}" y="{pad + 14 * i}" fill="{col}" '
                     f'font-size="11">{label}</text>')
    parts.append(f'<text x="{w / 2}" y="{h - 8}" font-size="12">{xlabel}</text>')
    parts.append(f'<text x="4" y="{pad / 2 - 6}" font-size="12">'
                 f'{"log10 " if logy else ""}{ylabel}</text>')
    parts.append("</svg>")
    _write(path, "\n".join(parts) + "\n")


# -- commands --------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    from .clifford import generate_stabilizer_dataset
    from .training import generate_dataset

    cfg = {"ansatz": args.ansatz, "qubits": args.qubits, "depth": args.depth,
           "train": args.train, "test": args.test, "seed": args.seed,
           "inline": bool(args.inline)}
    if args.train < 1 or args.test < 0 or args.qubits < 1:
        raise UsageError("need --qubits >= 1, --train >= 1 and --test >= 0")
    if args.ansatz == "clifford":
        ds = generate_stabilizer_dataset(args.qubits, args.train, args.test, args.seed,
                                         length=args.depth)
        text = ds.to_json()
    else:
        ds = generate_dataset(args.ansatz, args.qubits, args.train, args.test, args.seed,
                              depth=args.depth)
        text = ds.to_json(inline_states=args.inline)
    out = Path(args.out)
    _write(out, text + "\n")
    _manifest(args, cfg, [out])
    return EXIT_OK


def _load_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"file not found: {p}")
    return json.loads(p.read_text())


def cmd_train(args) -> int:
    from .circuits import build, build_with_params
    from .training import Dataset, TrainConfig, cost_test, train

    d = _load_json(args.data)
    if d.get("kind") != "dqae-dataset":
        raise UsageError("train needs a variational dataset (use train-clifford for stabilizer data)")
    ds = Dataset.from_dict(d)
    family = args.ansatz or ds.family
    if family == "identity":
        raise UsageError("choose a trainable --ansatz")
    if args.params is not None:
        c = build_with_params(family, ds.n, args.params)
    else:
        c = build(family, ds.n, args.depth or 10)
    tc = TrainConfig(optimizer=args.optimizer, learning_rate=args.lr, max_epochs=args.epochs,
                     convergence_tol=args.tol, seed=args.seed, restarts=args.restarts,
                     init=args.init)
    res = train(c, ds.train, tc, test=ds.test if args.log_test else None)
    c_test = cost_test(c, res.theta, ds.test) if len(ds.test) else None
    out = Path(args.out)
    model = {"circuit": c.to_dict(), "theta": [float(x) for x in res.theta],
             "config": tc.to_dict(), "converged": res.converged, "c_train": res.cost,
             "c_test": c_test, "epochs": res.epochs}
    traj_path = out.with_name(out.stem + ".trajectory.csv")
    _write(out, json.dumps(model, indent=1) + "\n")
    _write(traj_path, res.trajectory.to_csv())
    outputs = [out, traj_path]
    if args.svg:
        t = res.trajectory
        series = {"train": (t.column("epoch"), np.maximum(t.column("c_train"), 1e-16))}
        if args.log_test:
            series["test"] = (t.column("epoch"), np.maximum(t.column("c_test"), 1e-16))
        _svg_lines(series, Path(args.svg), "epoch", "cost", logy=True)
        outputs.append(Path(args.svg))
    cfg = {"data": str(args.data), "ansatz": family, "depth": args.depth, "params": c.n_params,
           "train_config": tc.to_dict(), "log_test": bool(args.log_test)}
    _manifest(args, cfg, outputs, {"converged": res.converged, "c_train": res.cost,
                                   "c_test": c_test, "epochs": res.epochs})
    print(json.dumps({"converged": res.converged, "c_train": res.cost, "c_test": c_test}))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_train_clifford(args) -> int:
    from .clifford import AnnealSchedule, StabilizerDataset, clifford_cost, metropolis_train
    from .state import RngStream

    d = _load_json(args.data)
    if d.get("kind") != "stabilizer":
        raise UsageError("train-clifford needs a stabilizer dataset (gen-data --ansatz clifford)")
    ds = StabilizerDataset.from_dict(d)
    sched = AnnealSchedule(kind=args.schedule, t0=args.t0, beta=args.beta, tau=args.tau,
                           max_steps=args.steps, restarts=args.restarts)
    res = metropolis_train(ds.tableaux("train"), sched, RngStream(args.seed, "anneal"))
    test = ds.tableaux("test")
    c_test = clifford_cost(res.circuit, test) if test else None
    c_test0 = clifford_cost(type(res.circuit)(ds.n, []), test) if test else None
    out = Path(args.out)
    model = {"circuit": res.circuit.to_dict(), "converged": res.converged, "steps": res.steps,
             "c_train": res.cost, "best_c_train": res.best_cost, "c_test": c_test,
             "c_test_initial": c_test0}
    _write(out, json.dumps(model, indent=1) + "\n")
    cfg = {"data": str(args.data), "schedule": sched.__dict__, "seed": args.seed}
    _manifest(args, cfg, [out], {k: model[k] for k in ("converged", "steps", "c_train", "c_test")})
    print(json.dumps({k: model[k] for k in ("converged", "steps", "c_train", "c_test")}))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_dqfim(args) -> int:
    from . import dqfim

    out = Path(args.out)
    cfg = {"ansatz": args.ansatz, "qubits": args.qubits, "train": args.train,
           "params": args.params, "sweep": bool(args.sweep), "samples": args.samples,
           "seed": args.seed}
    if args.sweep:
        rows = []
        lc = dqfim.critical_data(args.ansatz, args.qubits, args.seed, args.samples)
        for L in sorted(lc["ranks"]):
            mc, rank = dqfim.critical_params(args.ansatz, args.qubits, L, args.seed, args.samples)
            rows.append((L, mc, rank))
        lines = ["ansatz,n,L,mc,rank"] + [f"{args.ansatz},{args.qubits},{L},{m},{r}" for L, m, r in rows]
        text = "\n".join(lines) + "\n"
        report = {"ansatz": args.ansatz, "n": args.qubits, "L": None, "M": None, "rank": None,
                  "eigenvalues": None, "mc": {str(L): m for L, m, _ in rows},
                  "lc_exact": lc["lc_exact"], "lc_approx": lc["lc_approx"]}
        _write(out, text)
        rep_path = out.with_name(out.stem + ".report.json")
        _write(rep_path, json.dumps(report) + "\n")
        _manifest(args, cfg, [out, rep_path], report)
        print(text, end="")
        return EXIT_OK
    if args.params is None:
        mc, rank = dqfim.critical_params(args.ansatz, args.qubits, args.train, args.seed, args.samples)
        report = {"ansatz": args.ansatz, "n": args.qubits, "L": args.train, "M": mc,
                  "rank": rank, "eigenvalues": None, "mc": mc, "lc_exact": None, "lc_approx": None}
    else:
        from .circuits import build_with_params
        from .state import RngStream

        c = build_with_params(args.ansatz, args.qubits, args.params)
        data = dqfim.rank_dataset(args.ansatz, args.qubits, args.train, args.seed)
        theta = RngStream(args.seed, ("theta", args.train, args.params)).generator().uniform(
            0, 2 * np.pi, c.n_params)
        rep = dqfim.dqfim_report(c, theta, data)
        report = {"ansatz": args.ansatz, "n": args.qubits, "L": args.train, "M": args.params,
                  "rank": rep.rank, "eigenvalues": [float(x) for x in rep.eigenvalues],
                  "mc": None, "lc_exact": None, "lc_approx": None}
    _write(out, json.dumps(report) + "\n")
    _manifest(args, cfg, [out], {"rank": report["rank"], "mc": report["mc"]})
    print(json.dumps({k: report[k] for k in ("ansatz", "n", "L", "M", "rank", "mc")}))
    return EXIT_OK


def cmd_grad_variance(args) -> int:
    from .training import gradient_variance_experiment

    ns = _int_range(args.qubits)
    if len(ns) < 3:
        raise UsageError("grad-variance needs at least three qubit counts to fit")
    fams = [f for f in args.ansatz.split(",") if f]
    lines = ["family,n,depth,mean_grad_variance"]
    fits = {}
    for fam in fams:
        st = gradient_variance_experiment(fam, ns, args.depth_rule, args.samples, args.seed,
                                          theta_samples=args.theta_samples)
        lines += st.to_csv().splitlines()[1:]
        fits[fam] = {"gamma": st.gamma, "power_r2": st.power_r2,
                     "exp_rate": st.exp_rate, "exp_r2": st.exp_r2}
    out = Path(args.out)
    _write(out, "\n".join(lines) + "\n")
    fit_path = out.with_name(out.stem + ".fits.json")
    _write(fit_path, json.dumps(fits, indent=1, sort_keys=True) + "\n")
    outputs = [out, fit_path]
    if args.svg:
        rows = [l.split(",") for l in lines[1:]]
        series = {f: ([int(r[1]) for r in rows if r[0] == f], [float(r[3]) for r in rows if r[0] == f])
                  for f in fams}
        _svg_lines(series, Path(args.svg), "n", "Var[dC]", logy=True)
        outputs.append(Path(args.svg))
    cfg = {"ansatz": fams, "qubits": ns, "depth_rule": args.depth_rule,
           "samples": args.samples, "theta_samples": args.theta_samples, "seed": args.seed}
    _manifest(args, cfg, outputs, fits)
    print(json.dumps(fits, sort_keys=True))
    return EXIT_OK


def cmd_channel(args) -> int:
    from .loss_channel import InfeasibleBudget, LossSpec, approx_copies, min_copies, sweep, sweep_csv

    qs = _floats(args.loss)
    out = Path(args.out)
    if args.sweep_qubits:
        ns = _int_range(args.sweep_qubits)
        try:
            rows = sweep(ns, qs, args.budget)
        except InfeasibleBudget as e:
            print(str(e), file=sys.stderr)
            return EXIT_INFEASIBLE
        text = sweep_csv(rows)
        _write(out, text)
        outputs = [out]
        if args.svg:
            series = {}
            for q in qs:
                for mode in ("unencoded", "product"):
                    sel = [r for r in rows if r["q"] == q and r["mode"] == mode]
                    series[f"{mode} q={q}"] = ([r["n"] for r in sel], [r["R_exact"] for r in sel])
            _svg_lines(series, Path(args.svg), "n", "R", logy=True)
            outputs.append(Path(args.svg))
        cfg = {"sweep_qubits": ns, "loss": qs, "budget": args.budget}
        _manifest(args, cfg, outputs)
        return EXIT_OK
    if args.qubits is None:
        raise UsageError("channel needs --qubits or --sweep-qubits")
    spec = LossSpec(qs) if len(qs) > 1 else LossSpec.homogeneous(args.qubits, qs[0])
    if spec.n != args.qubits:
        raise UsageError("--loss needs one rate or one rate per qubit")
    report = {"n": args.qubits, "loss": list(spec.q), "budget": args.budget}
    try:
        for mode in ("unencoded", "product"):
            report[f"R_{mode}"] = min_copies(args.qubits, spec, args.budget, mode)
            if spec.is_homogeneous and 0 < spec.q_max < 1:
                report[f"R_{mode}_approx"] = approx_copies(args.qubits, spec.q_max, args.budget, mode)
    except InfeasibleBudget as e:
        print(str(e), file=sys.stderr)
        return EXIT_INFEASIBLE
    _write(out, json.dumps(report) + "\n")
    _manifest(args, {"qubits": args.qubits, "loss": qs, "budget": args.budget}, [out], report)
    print(json.dumps(report))
    return EXIT_OK


def cmd_transport(args) -> int:
    from .loss_channel import (LossSpec, failure_product, failure_unencoded, simulate_transport)
    from .state import RngStream
    from .training import generate_dataset

    n = args.qubits
    qs = _floats(args.loss)
    spec = LossSpec(qs) if len(qs) > 1 else LossSpec.homogeneous(n, qs[0])
    if spec.n != n:
        raise UsageError("--loss needs one rate or one rate per qubit")
    ds = generate_dataset(args.ansatz, n, 1, 0, args.seed)
    psi = ds.train[0]
    circuit = None if args.no_disentangler else ds.scrambler.inverse()
    theta = None if args.no_disentangler else -ds.scrambler_theta
    out_mc = simulate_transport(psi, circuit, theta, spec, args.copies, args.trials,
                                RngStream(args.seed, "transport").generator())
    report = out_mc.report()
    if spec.is_homogeneous:
        report["closed_form_failure_product"] = failure_product(n, spec.q_max, args.copies)
        report["closed_form_failure_unencoded"] = failure_unencoded(n, spec.q_max, args.copies)
    out = Path(args.out)
    _write(out, json.dumps(report) + "\n")
    cfg = {"qubits": n, "loss": qs, "copies": args.copies, "trials": args.trials,
           "ansatz": args.ansatz, "no_disentangler": bool(args.no_disentangler), "seed": args.seed}
    _manifest(args, cfg, [out], report)
    print(json.dumps(report))
    return EXIT_OK


def cmd_capacity(args) -> int:
    from .capacity import (CapacityConfig, capacity_cost, capacity_objective,
                           generate_capacity_dataset, round_trip_fidelity)
    from .circuits import build
    from .state import RngStream
    from .training import TrainConfig, train

    cfg = CapacityConfig(args.product, args.reference, corrected=not args.uncorrected)
    ds = generate_capacity_dataset(cfg, args.train, args.seed)
    c = build("he", cfg.n_total, args.depth)
    tc = TrainConfig(optimizer=args.optimizer, learning_rate=args.lr, max_epochs=args.epochs,
                     convergence_tol=args.tol, seed=args.seed, restarts=args.restarts)
    res = train(c, ds.states, tc, objective=capacity_objective(cfg))
    gen = RngStream(args.seed, "born").generator()
    fids = [round_trip_fidelity(s, c, res.theta, cfg, gen) for s in ds.states]
    report = {"n_product": cfg.n_product, "n_reference": cfg.n_reference,
              "corrected": cfg.corrected, "converged": res.converged,
              "cost": capacity_cost(c, res.theta, ds.states, cfg),
              "fidelity_min": float(min(fids)), "fidelities": [float(f) for f in fids]}
    out = Path(args.out)
    model = {"circuit": c.to_dict(), "theta": [float(x) for x in res.theta], "report": report}
    _write(out, json.dumps(model, indent=1) + "\n")
    traj = out.with_name(out.stem + ".trajectory.csv")
    _write(traj, res.trajectory.to_csv())
    conf = {"product": args.product, "reference": args.reference, "depth": args.depth,
            "train": args.train, "uncorrected": bool(args.uncorrected),
            "train_config": tc.to_dict()}
    _manifest(args, conf, [out, traj], report)
    print(json.dumps({k: report[k] for k in ("converged", "cost", "fidelity_min")}))
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_selftest(args) -> int:
    from .acceptance import run_all

    results = run_all(quick=args.quick, only=_int_range(args.only) if args.only else None)
    out = Path(args.out)
    _write(out, json.dumps([r.as_dict() for r in results], indent=1) + "\n")
    _manifest(args, {"quick": bool(args.quick), "only": args.only}, [out],
              {str(r.number): r.passed for r in results})
    return EXIT_OK if all(r.passed for r in results) else EXIT_NOT_CONVERGED


# -- parser ----------------------------------------------------------------------


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "train-clifford": cmd_train_clifford,
    "dqfim": cmd_dqfim, "grad-variance": cmd_grad_variance, "channel": cmd_channel,
    "transport": cmd_transport, "capacity": cmd_capacity, "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None,
                        help="worker cap (recorded; computations run in one process)")
    common.add_argument("--out", default=None, help="main output file")
    common.add_argument("--config", default=None, help="JSON config or manifest supplying defaults")

    p = _Parser(prog="dqae", description="Disentangling quantum autoencoder toolkit")
    p.add_argument("--version", action="version", version=f"dqae {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", parents=[common], help="generate a dataset")
    g.add_argument("--ansatz", required=True, choices=["he", "ising", "fermion", "identity", "clifford"])
    g.add_argument("--qubits", type=int, required=True)
    g.add_argument("--depth", type=int, default=None,
                   help="scrambler layers (clifford: number of random moves)")
    g.add_argument("--train", type=int, default=1)
    g.add_argument("--test", type=int, default=100)
    g.add_argument("--inline", action="store_true", help="embed state amplitudes")

    t = sub.add_parser("train", parents=[common], help="train a variational disentangler")
    t.add_argument("--data", required=True)
    t.add_argument("--ansatz", choices=["he", "ising", "fermion"], default=None)
    t.add_argument("--depth", type=int, default=None)
    t.add_argument("--params", type=int, default=None, help="number of parameters M (overrides --depth)")
    t.add_argument("--optimizer", choices=["adam", "plain-gd", "lbfgs"], default="adam")
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--epochs", type=int, default=2000)
    t.add_argument("--tol", type=float, default=1e-3)
    t.add_argument("--restarts", type=int, default=0)
    t.add_argument("--init", choices=["uniform", "zeros"], default="uniform")
    t.add_argument("--log-test", action="store_true", help="evaluate C_test every epoch")
    t.add_argument("--svg", default=None)

    tc = sub.add_parser("train-clifford", parents=[common], help="Metropolis Clifford learner")
    tc.add_argument("--data", required=True)
    tc.add_argument("--schedule", choices=["geometric", "harmonic"], default="geometric")
    tc.add_argument("--t0", type=float, default=0.1)
    tc.add_argument("--beta", type=float, default=0.9995)
    tc.add_argument("--tau", type=float, default=1000.0)
    tc.add_argument("--steps", type=int, default=200_000)
    tc.add_argument("--restarts", type=int, default=0)

    d = sub.add_parser("dqfim", parents=[common], help="DQFIM rank diagnostics")
    d.add_argument("--ansatz", required=True, choices=["he", "ising", "fermion"])
    d.add_argument("--qubits", type=int, required=True)
    d.add_argument("--train", type=int, default=1, help="number of training states L")
    d.add_argument("--params", type=int, default=None, help="single rank at this M")
    d.add_argument("--sweep", action="store_true", help="M_c(L) table and L_c")
    d.add_argument("--samples", type=int, default=5, help="random theta draws per rank")

    v = sub.add_parser("grad-variance", parents=[common], help="gradient variance scaling")
    v.add_argument("--ansatz", default="he,ising,fermion")
    v.add_argument("--qubits", default="4:10")
    v.add_argument("--depth-rule", default="auto", help="auto, <k>n or a fixed depth")
    v.add_argument("--samples", type=int, default=10, help="data instances per n")
    v.add_argument("--theta-samples", type=int, default=20, help="parameter draws per instance")
    v.add_argument("--svg", default=None)

    ch = sub.add_parser("channel", parents=[common], help="copy counts for the loss channel")
    ch.add_argument("--qubits", type=int, default=None)
    ch.add_argument("--sweep-qubits", default=None)
    ch.add_argument("--loss", default="0.1", help="rate, comma list (sweep) or per-qubit rates")
    ch.add_argument("--budget", type=float, default=0.01)
    ch.add_argument("--svg", default=None)

    tr = sub.add_parser("transport", parents=[common], help="Monte Carlo transport")
    tr.add_argument("--qubits", type=int, default=4)
    tr.add_argument("--loss", default="0.1")
    tr.add_argument("--copies", type=int, default=4)
    tr.add_argument("--trials", type=int, default=10000)
    tr.add_argument("--ansatz", choices=["he", "ising", "fermion", "identity"], default="he")
    tr.add_argument("--no-disentangler", action="store_true")

    cp = sub.add_parser("capacity", parents=[common], help="N+K capacity round trip")
    cp.add_argument("--product", type=int, default=2)
    cp.add_argument("--reference", type=int, default=1)
    cp.add_argument("--depth", type=int, default=12)
    cp.add_argument("--train", type=int, default=4)
    cp.add_argument("--optimizer", choices=["adam", "plain-gd", "lbfgs"], default="lbfgs")
    cp.add_argument("--lr", type=float, default=0.05)
    cp.add_argument("--epochs", type=int, default=3000)
    cp.add_argument("--tol", type=float, default=1e-8)
    cp.add_argument("--restarts", type=int, default=5)
    cp.add_argument("--uncorrected", action="store_true", help="use the +<Z>^2 reference term")

    st = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    st.add_argument("--quick", action="store_true", help="reduced sizes (smoke test)")
    st.add_argument("--only", default=None, help="criterion numbers, e.g. 1,3,7")
    return p


_DEFAULT_OUT = {"gen-data": "dataset.json", "train": "model.json", "train-clifford": "clifford_model.json",
                "dqfim": "dqfim.json", "grad-variance": "grad_variance.csv", "channel": "channel.json",
                "transport": "transport.json", "capacity": "capacity.json", "selftest": "selftest.json"}


def _apply_config(parser, argv) -> argparse.Namespace:
    # --config may supply required options, so it is read before the real parse
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config and command:
        conf = _load_json(known.config)
        if "config" in conf and "command" in conf:  # a manifest
            if conf["command"] != command:
                raise UsageError(f"manifest is for {conf['command']!r}, not {command!r}")
            conf = conf["config"]
        sub = parser._subparsers._group_actions[0].choices[command]
        known_dests = {a.dest for a in sub._actions}
        flat = dict(conf)
        for k, v in conf.get("train_config", {}).items():
            flat.setdefault({"learning_rate": "lr", "max_epochs": "epochs",
                             "convergence_tol": "tol"}.get(k, k), v)
        defaults = {}
        for k, v in flat.items():
            key = k.replace("-", "_")
            if key in known_dests:
                if isinstance(v, list):
                    v = ",".join(str(x) for x in v)
                defaults[key] = v
        sub.set_defaults(**defaults)
        for a in sub._actions:
            if a.dest in defaults:
                a.required = False
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("missing command")
    if args.out is None:
        args.out = _DEFAULT_OUT[args.command]
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, list(sys.argv[1:] if argv is None else argv))
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)


if __name__ == "__main__":
    sys.exit(main())
