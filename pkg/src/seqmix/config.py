"""Configuration files: nested key-value sections (INI dialect).

A model file defines the problem instance; an experiment file adds
expectation, solver, simulator, training and sweep sections.  The full field
reference lives in the README's configuration section.  Instances from the
shipped zoo can be referenced by name instead of spelling out dimensions,
class law and spectral atoms.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import SpecValidationError
from .gaussian import McPlan
from .losses import loss_by_name
from .model import ClassLaw, Dimensions, make_atom, ModelSpec, SpectralMeasure
from .saddle import SolverConfig
from .zoo import instance_by_name


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _parser(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    text = Path(path).read_text()
    cp.read_string(text)
    return cp


def config_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]


# ----------------------------------------------------------------------
# Model section.
# ----------------------------------------------------------------------

def model_spec_from_parser(cp: configparser.ConfigParser) -> ModelSpec:
    if cp.has_section("model") and cp.has_option("model", "instance"):
        name = cp.get("model", "instance")
        kwargs = {}
        if cp.has_option("model", "alpha"):
            kwargs["alpha"] = cp.getfloat("model", "alpha")
        if cp.has_option("model", "lambda"):
            kwargs["lam"] = cp.getfloat("model", "lambda")
        if cp.has_option("model", "d"):
            kwargs["d"] = cp.getint("model", "d")
        try:
            return instance_by_name(name, **kwargs)
        except KeyError as exc:
            raise SpecValidationError(str(exc)) from exc

    for section in ("dimensions", "class_law", "spectral_measure", "loss"):
        if not cp.has_section(section):
            raise SpecValidationError(f"config missing [{section}] section")

    dims = Dimensions(
        L=cp.getint("dimensions", "L"),
        r=cp.getint("dimensions", "r"),
        t=cp.getint("dimensions", "t"),
        K=tuple(_ints(cp.get("dimensions", "K"))),
        alpha=cp.getfloat("dimensions", "alpha"),
        lam=cp.getfloat("dimensions", "lambda"),
        d=cp.getint("dimensions", "d") if cp.has_option("dimensions", "d") else None,
    )

    support, probs = [], []
    for key in sorted(cp.options("class_law")):
        body = cp.get("class_law", key)
        left, right = body.split(":")
        support.append(tuple(_ints(left)))
        probs.append(float(right))
    class_law = ClassLaw(tuple(support), tuple(probs))

    atoms = []
    for key in sorted(cp.options("spectral_measure")):
        parts = cp.get("spectral_measure", key).split("|")
        if len(parts) != 4:
            raise SpecValidationError(
                f"atom line {key!r} must read 'weight | gamma | tau | pi'"
            )
        weight = float(parts[0])
        atoms.append(
            make_atom(
                dims, weight,
                gamma=np.asarray(_floats(parts[1])),
                tau=np.asarray(_floats(parts[2])),
                pi=np.asarray(_floats(parts[3])),
            )
        )
    nu = SpectralMeasure(tuple(atoms))

    loss_name = cp.get("loss", "name")
    loss_kwargs = {
        k: float(v) for k, v in cp.items("loss") if k != "name"
    }
    try:
        loss = loss_by_name(loss_name, **loss_kwargs)
    except KeyError as exc:
        raise SpecValidationError(str(exc)) from exc

    name = cp.get("model", "name", fallback=loss_name) if cp.has_section("model") else loss_name
    return ModelSpec(dims=dims, class_law=class_law, nu=nu, loss=loss, name=name)


def save_model_spec(spec: ModelSpec, path) -> None:
    dims = spec.dims
    lines = [
        "[model]",
        f"name = {spec.name or spec.loss.name}",
        "",
        "[dimensions]",
        f"L = {dims.L}",
        f"r = {dims.r}",
        f"t = {dims.t}",
        "K = " + " ".join(str(k) for k in dims.K),
        f"alpha = {dims.alpha!r}",
        f"lambda = {dims.lam!r}",
    ]
    if dims.d is not None:
        lines.append(f"d = {dims.d}")
    lines += ["", "[class_law]"]
    for i, (c, p) in enumerate(zip(spec.class_law.support, spec.class_law.probs)):
        lines.append(f"tuple_{i} = " + " ".join(str(x) for x in c) + f" : {p!r}")
    lines += ["", "[spectral_measure]"]
    for i, atom in enumerate(spec.nu.atoms):
        gam = " ".join(repr(atom.gamma[k]) for k in dims.lk_pairs())
        tau = " ".join(repr(atom.tau[k]) for k in dims.lk_pairs())
        pi = " ".join(repr(float(x)) for x in atom.pi)
        lines.append(f"atom_{i} = {atom.weight!r} | {gam} | {tau} | {pi}")
    lines += ["", "[loss]", f"name = {spec.loss.name}"]
    for k, v in spec.loss.params.items():
        lines.append(f"{k} = {v!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_model_spec(path) -> ModelSpec:
    return model_spec_from_parser(_parser(path))


# ----------------------------------------------------------------------
# Experiment sections.
# ----------------------------------------------------------------------

@dataclass
class GampOptions:
    d: int = 1000
    n: int = 0                    # 0 means round(alpha * d)
    seeds: tuple[int, ...] = (0,)
    max_iters: int = 200
    tol: float = 1e-8
    damping: float = 0.3


@dataclass
class ErmOptions:
    d: int = 500
    seeds: tuple[int, ...] = (0,)
    max_epochs: int = 5000
    grad_tol: float = 1e-6
    n_test: int = 200_000


@dataclass
class ExperimentConfig:
    spec: ModelSpec
    mc_plan: McPlan
    solver: SolverConfig
    alphas: tuple[float, ...]
    lambdas: tuple[float, ...]
    gamp: GampOptions = field(default_factory=GampOptions)
    erm: ErmOptions = field(default_factory=ErmOptions)
    out_dir: str = "out"
    source_path: Optional[str] = None

    def violations(self) -> list[str]:
        out = []
        if not self.alphas:
            out.append("ExperimentConfig: alpha grid is empty")
        if not self.lambdas:
            out.append("ExperimentConfig: lambda grid is empty")
        out += self.solver.violations()
        return out


def load_experiment(path) -> ExperimentConfig:
    cp = _parser(path)
    spec = model_spec_from_parser(cp)

    plan = McPlan(
        n_samples=cp.getint("mc", "n_samples", fallback=20000),
        seed=cp.getint("mc", "seed", fallback=0),
        antithetic=cp.getboolean("mc", "antithetic", fallback=True),
        crn=cp.getboolean("mc", "crn", fallback=True),
        gh_order=cp.getint("mc", "gh_order", fallback=0),
    )
    solver = SolverConfig(
        damping=cp.getfloat("solver", "damping", fallback=0.5),
        init=cp.get("solver", "init", fallback="cold"),
        eps_init=cp.getfloat("solver", "eps_init", fallback=1e-3),
        tol=cp.getfloat("solver", "tol", fallback=1e-8),
        max_iters=cp.getint("solver", "max_iters", fallback=500),
        mc_plan=plan,
        record_trajectory=cp.getboolean("solver", "record_trajectory", fallback=False),
        vhat_form=cp.get("solver", "vhat_form", fallback="jacobian"),
    )
    alphas = tuple(
        _floats(cp.get("sweep", "alphas", fallback=str(spec.dims.alpha)))
    )
    lambdas = tuple(
        _floats(cp.get("sweep", "lambdas", fallback=str(spec.dims.lam)))
    )
    gamp = GampOptions(
        d=cp.getint("gamp", "d", fallback=1000),
        n=cp.getint("gamp", "n", fallback=0),
        seeds=tuple(_ints(cp.get("gamp", "seeds", fallback="0"))),
        max_iters=cp.getint("gamp", "max_iters", fallback=200),
        tol=cp.getfloat("gamp", "tol", fallback=1e-8),
        damping=cp.getfloat("gamp", "damping", fallback=0.3),
    )
    erm = ErmOptions(
        d=cp.getint("erm", "d", fallback=500),
        seeds=tuple(_ints(cp.get("erm", "seeds", fallback="0"))),
        max_epochs=cp.getint("erm", "max_epochs", fallback=5000),
        grad_tol=cp.getfloat("erm", "grad_tol", fallback=1e-6),
        n_test=cp.getint("erm", "n_test", fallback=200_000),
    )
    out_dir = cp.get("output", "dir", fallback="out")
    return ExperimentConfig(
        spec=spec,
        mc_plan=plan,
        solver=solver,
        alphas=alphas,
        lambdas=lambdas,
        gamp=gamp,
        erm=erm,
        out_dir=out_dir,
        source_path=str(path),
    )
