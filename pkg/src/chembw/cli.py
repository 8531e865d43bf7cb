"""``chembw`` command line: train, compile, simulate, compare, spectrum, oracle.

Every command reads an HMM spec file (see :mod:`chembw.specfile`), writes its
outputs into ``--out-dir`` atomically and records a run manifest next to
them. Outputs carry no timestamps, so re-running a manifest's ``argv``
reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import warnings
from pathlib import Path

import numpy as np

from . import __version__, analysis, compiler, kinetics
from .crn import export_network
from .hmm import DegenerateLikelihoodError, baum_welch, forward, oracle_likelihood
from .integrate import IntegrationError
from .specfile import SpecError, load_spec

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_NONCONVERGED = 3
EXIT_INTEGRATION = 4

log = logging.getLogger("chembw")


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class Outputs:
    """Collects written files for the manifest."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: dict = {}

    def write(self, name: str, text: str) -> Path:
        path = self.dir / name
        atomic_write(path, text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        return path

    def manifest(self, args, config: dict, status: str) -> Path:
        doc = dict(
            tool="chembw",
            version=__version__,
            command=args.command,
            input=str(args.input),
            input_sha256=hashlib.sha256(Path(args.input).read_bytes()).hexdigest(),
            argv=list(args.argv),
            config=config,
            status=status,
            outputs={name: dict(path=name, sha256=digest) for name, digest in sorted(self.files.items())},
        )
        return self.write(f"manifest_{args.command}.json", dumps(doc))


def dumps(doc) -> str:
    return json.dumps(kinetics._plain(doc), indent=2, sort_keys=True) + "\n"


def fmt_matrix(mat, digits: int = 4) -> str:
    return "\n".join("  " + "  ".join(f"{v:.{digits}f}" for v in row) for row in np.asarray(mat))


def emit(args, doc: dict, text: str) -> None:
    print(dumps(doc) if args.json else text, end="" if args.json else "\n")


def _leaders(args, spec):
    h_star = spec.hmm.n_hidden - 1 if args.h_star is None else args.h_star
    return h_star, args.v_star


def _sim_config(args) -> kinetics.SimConfig:
    return kinetics.SimConfig(
        rel_tol=args.rtol,
        abs_tol=args.atol,
        t_max=args.t_max,
        convergence_tol=args.tol if args.tol is not None else 1e-9,
        checkpoint_interval=args.checkpoint_dt,
        clamp=getattr(args, "clamp", "none"),
    )


def _sim_settings(cfg: kinetics.SimConfig, args, h_star, v_star) -> dict:
    return dict(
        rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, t_max=cfg.t_max, convergence_tol=cfg.convergence_tol,
        checkpoint_interval=cfg.checkpoint_interval, clamp=cfg.clamp, seed=args.seed,
        h_star=h_star, v_star=v_star, beta_value=1.0, rates="uniform 1.0",
    )


def cmd_train(args, spec, out: Outputs) -> int:
    tol = args.tol if args.tol is not None else 1e-10
    res = baum_welch(spec.hmm, spec.obs, tol=tol, max_iters=args.max_iters)
    trace = "iteration,log_likelihood\n" + "".join(
        f"{i + 1},{ll!r}\n" for i, ll in enumerate(res.log_likelihoods)
    )
    out.write("train_trace.csv", trace)
    doc = dict(
        theta=res.theta, psi=res.psi, iterations=res.iterations, converged=res.converged,
        max_change=res.max_change, log_likelihood=res.log_likelihoods[-1],
    )
    out.write("train_summary.json", dumps(doc))
    out.manifest(args, dict(tol=tol, max_iters=args.max_iters), "ok" if res.converged else "nonconverged")
    emit(args, doc, "\n".join([
        f"theta:\n{fmt_matrix(res.theta)}",
        f"psi:\n{fmt_matrix(res.psi)}",
        f"iterations: {res.iterations} ({'converged' if res.converged else 'NOT converged'})",
        f"log-likelihood: {res.log_likelihoods[-1]:.10g}",
    ]))
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def cmd_compile(args, spec, out: Outputs) -> int:
    h_star, v_star = _leaders(args, spec)
    net, layout = compiler.compile_for(spec.hmm, spec.L, h_star, v_star)
    H, V, L = spec.hmm.n_hidden, spec.hmm.n_visible, spec.L
    out.write("network.txt", export_network(net, compiler.FAMILIES))
    doc = dict(
        n_hidden=H, n_visible=V, L=L, h_star=h_star, v_star=v_star,
        species=net.n_species, reactions=len(net.reactions), petals=len(net.rate_keys),
        flowers=len(net.flowers), species_by_kind=layout.counts(),
        reactions_by_part=compiler.count_by_part(net),
        tabulated_reactions_by_part=compiler.tabulated_reaction_counts(H, V, L),
    )
    out.write("layout.json", dumps(doc))
    out.manifest(args, dict(h_star=h_star, v_star=v_star), "ok")
    parts = ", ".join(f"{k} {v}" for k, v in doc["reactions_by_part"].items())
    emit(args, doc, "\n".join([
        f"{doc['species']} species, {doc['reactions']} reactions, {doc['petals']} petals, {doc['flowers']} flowers",
        f"reactions by part: {parts}",
    ]))
    return EXIT_OK


def _fit_clamped(run: kinetics.ChemicalRun) -> dict:
    kinds = kinetics.CLAMPS["em-m" if run.diagnostics["clamp"] == "em-e" else "em-e"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fit = analysis.fit_convergence_rate(run.trajectory)
    spectra = analysis.flower_spectra(run.network, run.rates, run.trajectory.final)
    free = {k: v["abscissa"] for k, v in spectra.items() if k.split("[")[0] in kinds and v["abscissa"] is not None}
    slowest = max(free, key=free.get) if free else None
    return dict(
        rate=fit.rate, intercept=fit.intercept, r2=fit.r2, window=fit.window, points=fit.n_points,
        warning=fit.warning or (str(caught[0].message) if caught else None),
        slowest_flower=slowest, slowest_abscissa=free.get(slowest),
    )


def cmd_simulate(args, spec, out: Outputs) -> int:
    h_star, v_star = _leaders(args, spec)
    cfg = _sim_config(args)
    run = kinetics.run_chemical_baum_welch(spec.hmm, spec.obs, cfg, seed=args.seed, h_star=h_star, v_star=v_star)
    out.write("trajectory.csv", kinetics.trajectory_csv(run.trajectory, run.network.names))
    extra = {}
    if cfg.clamp != "none":
        extra["rate_fit"] = _fit_clamped(run)
    out.write("summary.json", kinetics.summary_json(run, extra))
    d = run.diagnostics
    status = "ok" if d["converged"] else "nonconverged"
    out.manifest(args, _sim_settings(cfg, args, h_star, v_star), status)
    lines = [
        f"theta:\n{fmt_matrix(run.theta)}",
        f"psi:\n{fmt_matrix(run.psi)}",
        f"converged: {d['converged']} at t={d['t_final']:.6g} (scaled rhs {d['final_rhs_norm']:.3g})",
        f"positive: {d['positive']} ({len(d['boundary_species'])} boundary species)",
        f"classification: {d['classification']}",
        "residuals: " + ", ".join(f"{k} {v:.2e}" for k, v in d["bw_residuals"].items()),
    ]
    if "rate_fit" in extra:
        f = extra["rate_fit"]
        lines.append(
            f"rate fit: gamma={f['rate']:.4g} R2={f['r2']:.6f}; slowest flower {f['slowest_flower']} "
            f"abscissa {f['slowest_abscissa']:.4g}"
        )
    emit(args, json.loads(kinetics.summary_json(run, extra)), "\n".join(lines))
    return EXIT_OK if d["converged"] else EXIT_NONCONVERGED


def cmd_compare(args, spec, out: Outputs) -> int:
    h_star, v_star = _leaders(args, spec)
    cfg = _sim_config(args)
    bw = baum_welch(spec.hmm, spec.obs, tol=1e-10)
    run = kinetics.run_chemical_baum_welch(spec.hmm, spec.obs, cfg, seed=args.seed, h_star=h_star, v_star=v_star)
    rows = []
    for name, classical, chemical in (("theta", bw.theta, run.theta), ("psi", bw.psi, run.psi)):
        for (i, j), c in np.ndenumerate(classical):
            rows.append(dict(param=f"{name}[{i + 1},{j + 1}]", classical=c, chemical=chemical[i, j],
                             diff=abs(c - chemical[i, j])))
    doc = dict(
        rows=rows,
        max_diff=max(r["diff"] for r in rows),
        classical_converged=bw.converged,
        chemical_converged=run.diagnostics["converged"],
        classification=run.diagnostics["classification"],
        positive=run.diagnostics["positive"],
    )
    out.write("compare.json", dumps(doc))
    out.manifest(args, dict(bw_tol=1e-10, **_sim_settings(cfg, args, h_star, v_star)),
                 "ok" if run.diagnostics["converged"] else "nonconverged")
    table = [f"{'param':<12}{'classical':>12}{'chemical':>12}{'|diff|':>12}"]
    table += [f"{r['param']:<12}{r['classical']:>12.4f}{r['chemical']:>12.4f}{r['diff']:>12.4f}" for r in rows]
    table.append(f"max |diff| = {doc['max_diff']:.4g}; chemical equilibrium: {doc['classification']}, "
                 f"{'positive' if doc['positive'] else 'boundary'}")
    emit(args, doc, "\n".join(table))
    return EXIT_OK if run.diagnostics["converged"] else EXIT_NONCONVERGED


def cmd_spectrum(args, spec, out: Outputs) -> int:
    h_star, v_star = _leaders(args, spec)
    net, layout = compiler.compile_for(spec.hmm, spec.L, h_star, v_star)
    rates = compiler.default_rates(net)
    x = compiler.initial_concentrations(layout, spec.hmm, spec.obs, seed=args.seed)
    code = EXIT_OK
    if args.at == "final":
        traj = kinetics.simulate(net, rates, x, _sim_config(args))
        x = traj.final
        code = EXIT_OK if traj.converged else EXIT_NONCONVERGED
    spectra = analysis.flower_spectra(net, rates, x)
    flowers = {
        fid: dict(
            eigenvalues=[[float(e.real), float(e.imag)] for e in (s["eigenvalues"] if s["eigenvalues"] is not None else [])],
            abscissa=s["abscissa"], strongly_connected=s["strongly_connected"],
            switched_off=len(s["switched_off"]),
        )
        for fid, s in spectra.items()
    }
    doc = dict(at=args.at, flowers=flowers)
    out.write("spectrum.json", dumps(doc))
    out.manifest(args, dict(at=args.at, seed=args.seed, h_star=h_star, v_star=v_star),
                 "ok" if code == EXIT_OK else "nonconverged")
    lines = []
    for fid, s in flowers.items():
        ab = "n/a" if s["abscissa"] is None else f"{s['abscissa']:.6g}"
        conn = "" if s["strongly_connected"] else "  (not strongly connected)"
        lines.append(f"{fid:<12} abscissa {ab}{conn}")
    emit(args, doc, "\n".join(lines))
    return code


def cmd_oracle(args, spec, out: Outputs) -> int:
    _, scale = forward(spec.hmm, spec.obs)
    brute = oracle_likelihood(spec.hmm, spec.obs)
    fwd = float(np.exp(np.log(scale).sum()))
    doc = dict(forward=fwd, enumeration=brute, rel_diff=abs(fwd - brute) / brute if brute else abs(fwd))
    out.write("oracle.json", dumps(doc))
    out.manifest(args, {}, "ok")
    emit(args, doc, f"forward {fwd:.17g}\nenumeration {brute:.17g}\nrelative difference {doc['rel_diff']:.3g}")
    return EXIT_OK


COMMANDS = dict(
    train=(cmd_train, "classical Baum-Welch"),
    compile=(cmd_compile, "build the reaction network and export it"),
    simulate=(cmd_simulate, "run the chemical Baum-Welch network"),
    compare=(cmd_compare, "classical vs chemical parameters"),
    spectrum=(cmd_spectrum, "reduced spectrum of every flower"),
    oracle=(cmd_oracle, "forward likelihood vs path enumeration"),
)


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--input", "-i", required=True, type=Path, help="HMM spec file (JSON)")
    shared.add_argument("--out-dir", "-o", type=Path, default=Path("chembw_out"))
    shared.add_argument("--seed", type=int, default=0, help="seed for initial concentrations")
    shared.add_argument("--tol", type=float, default=None,
                        help="Baum-Welch parameter tolerance (train) or scaled rhs tolerance (default 1e-9)")
    shared.add_argument("--json", action="store_true", help="print machine-readable output")
    shared.add_argument("--h-star", type=int, default=None, help="leader hidden state index (default: last)")
    shared.add_argument("--v-star", type=int, default=0, help="leader visible state index")
    shared.add_argument("--t-max", type=float, default=1e6)
    shared.add_argument("--rtol", type=float, default=1e-10)
    shared.add_argument("--atol", type=float, default=1e-12)
    shared.add_argument("--checkpoint-dt", type=float, default=0.0, help="0 records every accepted step")
    shared.add_argument("--max-iters", type=int, default=100_000)
    shared.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="chembw", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[shared], help=help_)
        if name == "simulate":
            sp.add_argument("--clamp", choices=sorted(kinetics.CLAMPS), default="none")
        if name == "spectrum":
            sp.add_argument("--at", choices=("initial", "final"), default="final")
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        spec = load_spec(args.input)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    fn = COMMANDS[args.command][0]
    try:
        return fn(args, spec, Outputs(args.out_dir))
    except IntegrationError as exc:
        print(f"integration failed: {exc}; stiff species: {', '.join(exc.species)}", file=sys.stderr)
        return EXIT_INTEGRATION
    except (ValueError, DegenerateLikelihoodError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
