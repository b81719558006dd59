"""Experiment runner.

Configs are INI files. Every run writes CSV files plus ``manifest.json``
(config hash, seed, library version, file digests) into the output
directory. Exit codes: 1 invalid config, 2 numeric failure, 3 budget cap.
"""
import argparse
import configparser
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, clark, decompose, functionals, jumps, models, regcalc
from . import pathspace as ps
from ._accel import set_threads
from .errors import BudgetError, ConfigError, DomainError, NumericError

KINDS = (
    "regcalc-convergence", "assumption-a", "truncation-study", "decompose",
    "decompose-truncation", "clark-demo", "regularity-probe",
)
FUNCTIONALS = ("constant", "square", "tanh", "integral", "running_sup")
LAWS = ("uniform", "two_point", "gaussian")
MEASURES = ("lebesgue", "dirac", "lebesgue+dirac")

# section -> key -> (type, default); a default of ... means required
SCHEMA = {
    "experiment": {"kind": (str, ...), "seed": (int, ...), "out": (str, "out")},
    "grid": {"T": (float, 1.0), "m": (int, ...)},
    "model": {
        "sigma": (float, 1.0), "intensity": (float, 0.0), "law": (str, "uniform"),
        "a": (float, -0.5), "b": (float, 0.5), "c": (float, 1.0), "scale": (float, 0.5),
        "x_max": (float, 1.0), "gamma": (float, 1.0), "drift_slope": (float, 0.0),
        "drift_atoms": (str, ""), "extra_amplitude": (float, 0.0), "x0": (float, 0.0),
    },
    "functional": {
        "name": (str, "square"), "g": (str, "linear"), "measure": (str, "lebesgue"),
        "atom_t": (float, 0.5), "atom_mass": (float, 0.5), "value": (float, 1.0),
    },
    "schedule": {"kmin": (int, 3), "kmax": (int, 9), "truncation": (str, "0.5,0.25,0.125,0.0625,0.03125,0.015625,0.0078125")},
    "budgets": {
        "paths": (int, 10), "report_paths": (int, 2), "m_inner": (int, 256), "m_outer": (int, 200),
        "cap": (float, clark.DEFAULT_CAP), "max_paths": (int, 100000), "max_nodes": (int, 1 << 17),
    },
    "clark": {"payoff": (str, "tanh"), "lattice_times": (str, "0,0.25,0.5,0.75,1"), "buckets": (int, 8), "samples": (int, 20)},
}


def _floats(key, text):
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(key, f"expected a comma-separated list of numbers, got {text!r}") from None


class ExperimentConfig:
    """Typed, validated view of an INI experiment config."""

    def __init__(self, parser, seed=None, out=None):
        self.values = {}
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(section, "unknown section")
            for key in parser[section]:
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{section}.{key}", "unknown key")
        for section, keys in SCHEMA.items():
            for key, (typ, default) in keys.items():
                name = f"{section}.{key}"
                raw = parser.get(section, key, fallback=None) if parser.has_section(section) else None
                if raw is None:
                    if default is ...:
                        raise ConfigError(name, "missing required key")
                    val = default
                else:
                    try:
                        val = typ(raw.strip())
                    except ValueError:
                        raise ConfigError(name, f"expected {typ.__name__}, got {raw!r}") from None
                self.values[name] = val
        if seed is not None:
            self.values["experiment.seed"] = int(seed)
        if out is not None:
            self.values["experiment.out"] = str(out)
        self._check()

    @classmethod
    def load(cls, path, seed=None, out=None):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError("config", f"cannot parse {path}: {exc}") from None
        return cls(parser, seed, out)

    def __getitem__(self, key):
        return self.values[key]

    def _check(self):
        v = self.values
        if v["experiment.kind"] not in KINDS:
            raise ConfigError("experiment.kind", f"unknown experiment {v['experiment.kind']!r}; choose from {', '.join(KINDS)}")
        if v["experiment.seed"] < 0:
            raise ConfigError("experiment.seed", "must be >= 0")
        if v["functional.name"] not in FUNCTIONALS:
            raise ConfigError("functional.name", f"unknown functional {v['functional.name']!r}")
        if v["functional.g"] not in clark.PAYOFFS:
            raise ConfigError("functional.g", f"unknown payoff {v['functional.g']!r}")
        if v["clark.payoff"] not in clark.PAYOFFS:
            raise ConfigError("clark.payoff", f"unknown payoff {v['clark.payoff']!r}")
        if v["functional.measure"] not in MEASURES:
            raise ConfigError("functional.measure", f"unknown measure {v['functional.measure']!r}")
        if v["model.law"] not in LAWS:
            raise ConfigError("model.law", f"unknown jump law {v['model.law']!r}")
        if not 2 <= v["grid.m"] <= v["budgets.max_nodes"]:
            raise ConfigError("grid.m", f"must be between 2 and {v['budgets.max_nodes']}")
        for key in ("budgets.paths", "budgets.m_outer"):
            if not 1 <= v[key] <= v["budgets.max_paths"]:
                raise ConfigError(key, f"must be between 1 and {v['budgets.max_paths']}")
        if v["budgets.m_inner"] < 2:
            raise ConfigError("budgets.m_inner", "must be >= 2")
        _floats("schedule.truncation", v["schedule.truncation"])
        _floats("clark.lattice_times", v["clark.lattice_times"])
        try:
            self.grid()
            self.model().check_grid(self.grid())
            self.functional()
            self.schedule()
        except ConfigError:
            raise
        except DomainError as exc:
            raise ConfigError(self._blame(str(exc)), str(exc)) from None

    @staticmethod
    def _blame(msg):
        for word, key in (("lambda", "model.intensity"), ("eps", "schedule.kmin"), ("law", "model.law"),
                          ("uniform", "model.law"), ("horizon", "grid.T"), ("node", "grid.m"), ("drift", "model.drift_atoms")):
            if word in msg:
                return key
        return "config"

    def canonical(self):
        return json.dumps({k: self.values[k] for k in sorted(self.values) if k != "experiment.out"}, sort_keys=True)

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def grid(self):
        return ps.TimeGrid(self["grid.T"], self["grid.m"])

    def law(self):
        kind = self["model.law"]
        if kind == "uniform":
            return models.JumpLaw.uniform(self["model.a"], self["model.b"])
        if kind == "two_point":
            return models.JumpLaw.two_point(self["model.c"])
        return models.JumpLaw.gaussian(self["model.scale"], self["model.x_max"])

    def model(self):
        atoms = []
        for item in self["model.drift_atoms"].split(","):
            if item.strip():
                try:
                    t, size = item.split(":")
                    atoms.append((self.grid().snap(float(t)), float(size)))
                except ValueError:
                    raise ConfigError("model.drift_atoms", f"expected t:size pairs, got {item!r}") from None
        slope = self["model.drift_slope"]
        amp = self["model.extra_amplitude"]
        return models.JumpDiffusionSpec(
            sigma=self["model.sigma"], intensity=self["model.intensity"], law=self.law(), gamma=self["model.gamma"],
            drift=(lambda t: slope * t) if slope else None, drift_jumps=tuple(atoms),
            extra=models.OrthogonalExtraSpec(amp) if amp else None,
        )

    def measure(self):
        grid = self.grid()
        kind = self["functional.measure"]
        mu = functionals.FiniteMeasure.lebesgue(grid) if "lebesgue" in kind else functionals.FiniteMeasure(grid)
        if "dirac" in kind:
            mu = mu + functionals.FiniteMeasure.dirac(grid, grid.snap(self["functional.atom_t"]), self["functional.atom_mass"])
        return mu

    def functional(self):
        name = self["functional.name"]
        if name == "constant":
            return functionals.constant(self["functional.value"])
        if name == "square":
            return functionals.square()
        if name == "tanh":
            return functionals.markovian(np.tanh, lambda u: 1.0 - np.tanh(u) ** 2, name="tanh")
        if name == "running_sup":
            return functionals.running_sup()
        p = clark.payoff(self["functional.g"])
        return functionals.integral_functional(self.measure(), p.g, p.dg, name=f"integral[{p.name}]")

    def schedule(self):
        return regcalc.EpsSchedule.default(self.grid(), self["schedule.kmin"], self["schedule.kmax"])

    def truncation(self):
        return _floats("schedule.truncation", self["schedule.truncation"])

    def clark_spec(self):
        return clark.ClarkSpec(
            clark.payoff(self["clark.payoff"]), self.measure(), self.model(), x0=self["model.x0"],
            M_inner=self["budgets.m_inner"], M_outer=self["budgets.m_outer"], budget_cap=self["budgets.cap"],
        )


# --- experiments -----------------------------------------------------------

def _paths(cfg, threads):
    return models.ensemble(cfg.model(), cfg.grid(), 0.0, cfg["model.x0"], cfg["budgets.paths"], cfg["experiment.seed"], workers=threads)


def _median_diag(diags, tol):
    eps = diags[0].eps
    gaps = np.median(np.array([d.gaps for d in diags]), axis=0)
    scale = diags[0].scale
    return regcalc.ConvergenceDiagnostic(eps, gaps, regcalc.fit_slope(eps, gaps), bool(gaps[-1] < tol * scale), tol, scale)


def _continuous_part(p):
    return p.Mc


def run_regcalc(cfg, threads):
    procs = _paths(cfg, threads)
    sched = cfg.schedule()
    diags = []
    for p in procs:
        ref = regcalc.left_point_integral(p.X, p.X)
        diags.append(regcalc.ucp_limit(lambda e: regcalc.forward_integral_eps(p.X, p.X, e), sched, ref))
    return {"diagnostics.csv": _median_diag(diags, 5e-2).to_csv(), "ensemble.csv": models.ensemble_csv(procs),
            "path_0.csv": ps.path_to_csv(procs[0].X)}


def run_assumption_a(cfg, threads):
    procs = _paths(cfg, threads)
    F = cfg.functional()
    sched = cfg.schedule()
    zero = ps.CadlagPath.constant(cfg.grid(), 0.0)
    diags = [regcalc.ucp_limit(lambda e: regcalc.assumption_A_statistic(F, p.X, p.Mc, e), sched, zero, tol=1e-2)
             for p in procs]
    return {"diagnostics.csv": _median_diag(diags, 1e-2).to_csv(), "ensemble.csv": models.ensemble_csv(procs)}


def run_truncation(cfg, threads):
    procs = _paths(cfg, threads)
    sched = cfg.truncation()
    studies = [jumps.truncation_vanishing_study(p, sched) for p in procs]
    sup_z = np.median([s.sup_Zn for s in studies], axis=0)
    br = np.median([s.bracket_Zn for s in studies], axis=0)
    counts = np.sum([[len(r) for r in s.retained] for s in studies], axis=0)
    rows = ["eps_n,sup_Zn,bracket_Zn,retained_jumps"]
    rows += [f"{ps.fmt(e)},{ps.fmt(a)},{ps.fmt(b)},{int(c)}" for e, a, b, c in zip(sched, sup_z, br, counts)]
    return {"truncation.csv": "\n".join(rows) + "\n", "ensemble.csv": models.ensemble_csv(procs)}


def run_decompose(cfg, threads):
    procs = _paths(cfg, threads)
    F = cfg.functional()
    reports = [decompose.ito_dupire_decompose(F, p) for p in procs]
    files = {"summary.csv": decompose.ensemble_summary_csv(reports), "ensemble.csv": models.ensemble_csv(procs)}
    for i, r in enumerate(reports[: cfg["budgets.report_paths"]]):
        files[f"report_{i}.csv"] = r.to_csv()
    sched = cfg.schedule()
    ortho = [decompose.orthogonality_test(r, p.Mc, sched).diagnostic for r, p in zip(reports, procs)]
    files["orthogonality.csv"] = _median_diag(ortho, 5e-2).to_csv()
    rows = ["path,max_dgamma_at_jumps,passed"]
    for i, (r, p) in enumerate(zip(reports, procs)):
        pr = decompose.predictability_proxy(r, p)
        rows.append(f"{i},{ps.fmt(pr.max_at_jumps)},{int(pr.passed)}")
    files["predictability.csv"] = "\n".join(rows) + "\n"
    return files


def run_decompose_truncation(cfg, threads):
    procs = _paths(cfg, threads)
    F = cfg.functional()
    sched = cfg.truncation()
    diags = [decompose.decompose_via_truncation(F, p, sched).diagnostic for p in procs]
    return {"diagnostics.csv": _median_diag(diags, 5e-2).to_csv(), "ensemble.csv": models.ensemble_csv(procs)}


def run_clark(cfg, threads):
    spec = cfg.clark_spec()
    seed = cfg["experiment.seed"]
    times = _floats("clark.lattice_times", cfg["clark.lattice_times"])
    lattice = clark.clark_lattice(spec, seed, times)
    rep = clark.clark_representation_residual(spec, seed, buckets=cfg["clark.buckets"], lattice=lattice)
    return {"residual.csv": rep.residual_csv(), "drift.csv": rep.drift_csv(), "lattice.csv": rep.lattice_csv()}


def run_regularity(cfg, threads):
    spec = cfg.clark_spec()
    tab = clark.regularity_probe(spec, cfg["clark.samples"], cfg["experiment.seed"])
    rows = [",".join(tab.columns)] + [",".join(ps.fmt(v) for v in r) for r in tab.rows]
    const = ["inequality,C", f"value,{ps.fmt(tab.C_v)}", f"gradient,{ps.fmt(tab.C_grad)}",
             f"gradient_without_mu,{ps.fmt(tab.C_grad_without_mu)}"]
    return {"regularity.csv": "\n".join(rows) + "\n", "constants.csv": "\n".join(const) + "\n"}


RUNNERS = {
    "regcalc-convergence": run_regcalc, "assumption-a": run_assumption_a, "truncation-study": run_truncation,
    "decompose": run_decompose, "decompose-truncation": run_decompose_truncation, "clark-demo": run_clark,
    "regularity-probe": run_regularity,
}


def run(cfg, threads=1):
    """Run the experiment and write its files; returns the output directory."""
    set_threads(threads)
    if cfg["experiment.kind"] == "clark-demo" or cfg["experiment.kind"] == "regularity-probe":
        spec = cfg.clark_spec()
        if cfg["experiment.kind"] == "clark-demo" and clark.estimated_cost(spec) > spec.budget_cap:
            raise BudgetError(f"nested Monte Carlo needs {clark.estimated_cost(spec):.3g} evaluations; cap is {spec.budget_cap:.3g}")
    try:
        with np.errstate(all="ignore"):
            files = RUNNERS[cfg["experiment.kind"]](cfg, threads)
    except (DomainError, NumericError) as exc:
        raise NumericError(f"{exc} ({cfg['experiment.kind']}, seed {cfg['experiment.seed']})") from exc
    for name, text in files.items():
        if "nan" in text or "inf" in text:
            raise NumericError(f"non-finite value in {name} ({cfg['experiment.kind']}, seed {cfg['experiment.seed']})")
    out = Path(os.environ.get("DUPIRELAB_OUT") or cfg["experiment.out"])
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name, text in sorted(files.items()):
        (out / name).write_text(text, encoding="utf-8")
        digests[name] = hashlib.sha256(text.encode()).hexdigest()
    manifest = {"config_sha256": cfg.digest(), "seed": cfg["experiment.seed"], "version": __version__,
                "kind": cfg["experiment.kind"], "files": digests}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def catalog_text():
    lines = ["experiments: " + ", ".join(KINDS), "functionals: " + ", ".join(FUNCTIONALS),
             "payoffs: " + ", ".join(sorted(clark.PAYOFFS)), "jump laws: " + ", ".join(LAWS),
             "measures: " + ", ".join(MEASURES)]
    return "\n".join(lines)


def build_parser():
    ap = argparse.ArgumentParser(prog="dupirelab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config")
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out")
    sub.add_parser("list-catalog")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list-catalog":
        print(catalog_text())
        return 0
    try:
        cfg = ExperimentConfig.load(args.config, args.seed, args.out)
        if args.command == "validate":
            print(f"ok {cfg['experiment.kind']} {cfg.digest()}")
            return 0
        out = run(cfg, args.threads)
        print(f"wrote {out}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 2
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
