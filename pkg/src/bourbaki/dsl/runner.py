"""Build the objects a model document declares and run its check directives."""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .. import __version__, engine
from ..bundle import BidiffOp, Bundle, BundleMap, Section, check_metric, check_split
from ..chart import BaseAlgebroid, tangent_bundle
from ..constructions import (
    AlgebroidStack,
    canned_dorfman,
    extract_twist,
    induce_precalculus,
    make_cartan_precalculus,
    make_connection_precalculus,
    make_lie_algebroid_precalculus,
    make_zero_d_precalculus,
    standard_bracket,
    twist,
    twist_from_form,
)
from ..errors import BourbakiError
from ..poly import Poly
from .lexer import ModelError
from .parser import BaseDecl, BuiltinDecl, BundleDecl, CheckDirective, FormDecl, PolyDecl, TensorDecl, parse_model

__all__ = ["Model", "CheckResult", "RunReport", "build_model", "run_checks", "emit_report", "replay_witness"]


class Model:
    """A parsed document together with the objects it declares."""

    def __init__(self, doc, text):
        self.doc = doc
        self.text = text
        self.nvars = doc.nvars
        self.values = {}

    def value(self, name):
        return self.values[name]


def _semantic(stmt, message):
    return ModelError(message, stmt.line, stmt.col, "semantic")


def _tensor(model, name, shape, stmt, what):
    decl = model.doc.declaration(name)
    if tuple(decl.shape) != tuple(shape):
        raise _semantic(stmt, f"{what} {name!r} has shape {list(decl.shape)}, expected {list(shape)}")
    out = {}
    for key, v in decl.entries.items():
        out[key] = model.values[v] if isinstance(v, str) else v
    return out


def _rank(model, value):
    if isinstance(value, int):
        return value
    return model.values[value].rank


def _build_base(model, stmt):
    n = model.nvars
    A = Bundle(stmt.name, stmt.rank, n)
    entries = _tensor(model, stmt.anchor, (n, stmt.rank), stmt, "anchor")
    anchor = BundleMap(A, tangent_bundle(n), entries)
    structure = None
    if stmt.structure:
        structure = _tensor(model, stmt.structure, (stmt.rank,) * 3, stmt, "structure")
    return BaseAlgebroid.from_structure(anchor, structure, name=stmt.name)


def _build_builtin(model, stmt):
    n = model.nvars
    b = stmt.builtin
    arg = stmt.arg
    if b == "dorfman":
        return canned_dorfman(n, arg("k"))
    if b == "cartan":
        return make_cartan_precalculus(n, arg("k"), verify=False)
    if b == "standard":
        return standard_bracket(model.values[arg("pc")])
    if b == "lie_algebroid":
        return make_lie_algebroid_precalculus(model.values[arg("base")], arg("k"), verify=False)
    if b == "connection":
        m = _rank(model, arg("rank"))
        gamma = _tensor(model, arg("gamma"), (m, m, n), stmt, "gamma") if arg("gamma") else {}
        return make_connection_precalculus(m, gamma, arg("k"), nvars=n, verify=False)
    if b == "zero_d":
        base = model.values[arg("base")] if arg("base") else BaseAlgebroid.tangent(n)
        mz = _rank(model, arg("z"))
        mr = _rank(model, arg("r", 1))
        ma = base.rank
        nabla = _tensor(model, arg("nabla"), (mz, mz, ma), stmt, "nabla") if arg("nabla") else None
        Z, R = Bundle("Z", mz, n), Bundle("R", mr, n)
        iota = None
        if arg("iota"):
            iota = BidiffOp(base.bundle, Z, R, C=_tensor(model, arg("iota"), (mr, ma, mz), stmt, "iota"))
        d0 = None
        if arg("d0"):
            d0 = BundleMap(R, Z, _tensor(model, arg("d0"), (mz, mr), stmt, "d0"))
        return make_zero_d_precalculus(base, Z, nabla, R=R, iota=iota, d0=d0, verify=False)
    if b == "twist":
        st = model.values[arg("bracket")]
        if arg("form"):
            form = model.values[arg("form")]
            k = _form_degree_of(st)
            if k is None:
                raise _semantic(stmt, "form twists need a Dorfman-type bracket over the tangent bundle")
            if form.degree != k + 2:
                raise _semantic(stmt, f"twisting a degree-{k} bracket needs a {k + 2}-form, got a {form.degree}-form")
            H = twist_from_form(n, k, form)
        else:
            A, Z = st.split.A, st.split.Z
            H = BidiffOp(A, A, Z, C=_tensor(model, arg("h"), (Z.rank, A.rank, A.rank), stmt, "h"))
        return twist(st, st.split, H)
    if b == "induce":
        st = model.values[arg("bracket")]
        return induce_precalculus(st, st.metric, st.split, verify=False)
    if b == "extract_twist":
        st = model.values[arg("bracket")]
        split = st.split
        if arg("phi"):
            phi = BundleMap(split.A, split.E, _tensor(model, arg("phi"), (split.E.rank, split.A.rank), stmt, "phi"))
            split = split.with_phi(phi)
        return extract_twist(st, st.metric, split, model.values[arg("reference")], detailed=True)
    raise _semantic(stmt, f"unknown builtin {b!r}")


def _form_degree_of(stack):
    """``k`` when the stack lives on ``T + Lambda^k T*``, else None."""
    from math import comb

    if not getattr(stack.base, "is_tangent", False):
        return None
    n = stack.base.nvars
    for k in range(1, n + 1):
        if comb(n, k) == stack.split.Z.rank and stack.R.rank == comb(n, k - 1):
            return k
    return None


def build_model(text):
    """Parse ``text`` and construct every declaration in order."""
    doc = parse_model(text)
    model = Model(doc, text)
    for stmt in doc.statements:
        try:
            if isinstance(stmt, BundleDecl):
                model.values[stmt.name] = Bundle(stmt.name, stmt.rank, doc.nvars)
            elif isinstance(stmt, (PolyDecl,)):
                model.values[stmt.name] = stmt.poly
            elif isinstance(stmt, FormDecl):
                model.values[stmt.name] = stmt.form
            elif isinstance(stmt, TensorDecl):
                model.values[stmt.name] = stmt
            elif isinstance(stmt, BaseDecl):
                model.values[stmt.name] = _build_base(model, stmt)
            elif isinstance(stmt, BuiltinDecl):
                model.values[stmt.name] = _build_builtin(model, stmt)
        except ModelError:
            raise
        except BourbakiError as exc:
            raise _semantic(stmt, f"cannot construct {getattr(stmt, 'name', '')!r}: {exc}") from None
    return model


# -- running checks ----------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    axiom: str
    verdict: str
    degree: int
    seed: int
    witness: dict = None
    millis: object = None
    summary: str = ""
    report: object = field(default=None, repr=False)
    classification: object = None
    internal: bool = False

    def as_json(self):
        out = {
            "name": self.name,
            "axiom": self.axiom,
            "verdict": self.verdict,
            "degree": self.degree,
            "seed": self.seed,
        }
        if self.witness is not None:
            out["witness"] = self.witness
        out["millis"] = self.millis
        return out


@dataclass
class RunReport:
    version: str
    input_sha256: str
    checks: list
    classification: list = None

    @property
    def exit_code(self):
        if any(c.internal for c in self.checks):
            return 3
        if any(c.verdict in ("failed", "error") for c in self.checks):
            return 1
        return 0

    def as_json(self):
        out = {
            "version": self.version,
            "input_sha256": self.input_sha256,
            "checks": [c.as_json() for c in self.checks],
        }
        if self.classification is not None:
            out["classification"] = self.classification
        return out


def _witness_json(report):
    w = report.failing_witness()
    if w is None:
        return None
    sub = _failing_axiom(report)
    data = w.as_dict()
    return {"axiom": sub, "sections": data["sections"], "residual": data["residual"]}


def _failing_axiom(report):
    if report.witness is not None and not report.subreports:
        return report.axiom
    for sub in report.subreports:
        if not sub.passed and sub.failing_witness() is not None:
            return _failing_axiom(sub)
    return report.axiom


def _run_engine_check(model, directive, opts):
    st = model.values[directive.target]
    ax = directive.axiom
    if ax == "precalculus":
        return engine.check_precalculus(st, **opts)
    if ax == "right_leibniz":
        return engine.check_right_leibniz(st.bracket, st.anchor)
    if ax == "locality":
        return engine.check_locality(st.bracket, st.anchor, st.locality(), **opts)
    if ax == "symmetric_part":
        return engine.check_symmetric_part(st.bracket, st.metric, st.dirac, **opts)
    if ax == "metric_invariance":
        return engine.check_metric_invariance(st.bracket, st.metric, st.lie_r, st.rho, st.base, **opts)
    if ax == "anchor_morphism":
        return engine.check_anchor_morphism(st.bracket, st.rho, st.base.bracket, **opts)
    if ax == "jacobi":
        return engine.check_jacobi(st.bracket, **opts)
    if ax == "classify":
        return st.classify(**opts)
    raise ValueError(ax)


def _run_one(model, directive, overrides, timings):
    opts = {
        "degree": engine.DEFAULT_DEGREE,
        "seed": engine.DEFAULT_SEED,
        "samples": engine.DEFAULT_SAMPLES,
    }
    opts.update(directive.options)
    opts.update({k: v for k, v in overrides.items() if v is not None})
    start = time.perf_counter()
    result = CheckResult(directive.name, directive.axiom, "failed", opts["degree"], opts["seed"])
    try:
        _fill(result, model, directive, opts)
    except BourbakiError as exc:
        result.verdict = "error"
        result.summary = f"error: {exc}"
    except Exception as exc:  # keep the run going; the exit status reports it
        result.verdict = "error"
        result.summary = f"internal error: {type(exc).__name__}: {exc}"
        result.internal = True
    if timings:
        result.millis = round((time.perf_counter() - start) * 1000, 3)
    return result


def _fill(result, model, directive, opts):
    ax = directive.axiom
    target = model.values[directive.target]
    if ax == "metric":
        g = target.metric
        rep = check_metric(g, engine.default_witness_points(g.nvars))
        result.verdict = "proved-structural" if rep.ok else "failed"
        result.summary = rep.describe()
        if not rep.ok:
            if rep.status == "asymmetric":
                r, a, b = rep.offending
                result.witness = {"detail": rep.describe(), "entry": [r + 1, a + 1, b + 1]}
            else:
                result.witness = {"detail": rep.describe(), "point": [str(x) for x in rep.offending]}
        return
    if ax == "split":
        rep = check_split(target.split, target.metric)
        result.verdict = "proved-structural" if rep.exact else "failed"
        result.summary = rep.describe()
        if not rep.exact:
            name, (r, c), p = rep.failures[0]
            result.witness = {"detail": name, "entry": [r + 1, c + 1], "residual": str(p)}
        return
    if ax == "reconstruction":
        ok = target.reconstruction_ok and target.metric_ok
        result.verdict = "proved-structural" if ok else "failed"
        td = target.twist
        result.summary = (
            f"F {'= 0' if not td.F.C else 'nonzero'}, H with {len(td.H.C)} entries"
            + (", H is a Z-valued 2-form" if td.isotropic else "")
            + ("" if ok else "; " + "; ".join(target.notes))
        )
        if not ok:
            result.witness = {"detail": "; ".join(target.notes)}
        return
    rep = _run_engine_check(model, directive, opts)
    result.report = rep
    if isinstance(rep, engine.HierarchyReport):
        failed = [r for r in rep.reports if not r.passed]
        result.verdict = "failed" if failed else "verified"
        result.summary = rep.label
        result.classification = {
            "name": directive.name,
            "label": rep.label,
            "verdicts": {r.axiom: r.verdict for r in rep.reports},
            "notes": list(rep.notes),
        }
        if failed:
            result.witness = _witness_json(failed[0])
        return
    result.verdict = rep.verdict
    result.summary = rep.summary()
    if not rep.passed:
        result.witness = _witness_json(rep)


def run_checks(model, degree=None, seed=None, samples=None, jobs=1, timings=False):
    """Run every check directive; output order is document order whatever ``jobs`` is."""
    overrides = {"degree": degree, "seed": seed, "samples": samples}
    directives = model.doc.checks
    if jobs > 1 and len(directives) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda d: _run_one(model, d, overrides, timings), directives))
    else:
        results = [_run_one(model, d, overrides, timings) for d in directives]
    classification = [r.classification for r in results if r.classification is not None]
    digest = hashlib.sha256(model.text.encode("utf-8")).hexdigest()
    return RunReport(__version__, digest, results, classification or None)


def emit_report(report, fmt="text"):
    if fmt == "json":
        return json.dumps(report.as_json(), indent=2, sort_keys=False) + "\n"
    lines = []
    for c in report.checks:
        status = {"proved-structural": "PASS", "verified": "PASS", "failed": "FAIL"}.get(c.verdict, "ERROR")
        label = engine.AXIOM_LABELS.get(c.axiom.replace("_", "-"), c.axiom)
        lines.append(f"{status} {c.name} [{label}] {c.summary} (degree={c.degree} seed={c.seed})")
        if c.classification:
            for ax, v in c.classification["verdicts"].items():
                lines.append(f"    {engine.AXIOM_LABELS.get(ax, ax)}: {v}")
            for note in c.classification["notes"]:
                lines.append(f"    {note}")
        if c.witness and "sections" in c.witness:
            secs = ", ".join(f"{k} = [{', '.join(v)}]" for k, v in c.witness["sections"].items())
            lines.append(f"    witness ({c.witness['axiom']}): {secs}")
            lines.append(f"    residual: [{', '.join(c.witness['residual'])}]")
        elif c.witness:
            lines.append(f"    witness: {c.witness}")
    passed = sum(c.verdict in ("proved-structural", "verified") for c in report.checks)
    lines.append(f"{passed}/{len(report.checks)} checks passed")
    return "\n".join(lines) + "\n"


# -- replay ------------------------------------------------------------------


def _find_witness(report, axiom):
    if report.axiom == axiom and report.witness is not None:
        return report.witness
    for sub in report.subreports:
        w = _find_witness(sub, axiom)
        if w is not None:
            return w
    return None


def replay_witness(model, entry):
    """Re-evaluate a witness block from a json report against the document.

    Returns ``(residual_strings, matches_recorded)``.
    """
    name = entry["name"]
    witness = entry.get("witness") or {}
    if "sections" not in witness:
        raise ModelError(f"check {name!r} has no replayable witness", 1, 1, "semantic")
    directive = next((d for d in model.doc.checks if d.name == name), None)
    if directive is None:
        raise ModelError(f"no check named {name!r} in the document", 1, 1, "semantic")
    opts = {"degree": entry.get("degree"), "seed": entry.get("seed")}
    opts = {k: v for k, v in opts.items() if v is not None}
    full = dict(engine_defaults())
    full.update(directive.options)
    full.update(opts)
    rep = _run_engine_check(model, directive, full)
    reports = rep.reports if isinstance(rep, engine.HierarchyReport) else (rep,)
    original = None
    for r in reports:
        original = _find_witness(r, witness["axiom"])
        if original is not None:
            break
    if original is None:
        raise ModelError(f"check {name!r} no longer fails {witness['axiom']}", directive.line, directive.col, "semantic")
    bundles = dict((k, s.bundle) for k, s in original.sections)
    sections = {}
    for slot, comps in witness["sections"].items():
        if slot not in bundles:
            raise ModelError(f"unknown witness slot {slot!r}", directive.line, directive.col, "semantic")
        sections[slot] = Section.from_strings(bundles[slot], comps)
    residual = original.replay(tuple(sections.items()))
    strings = residual.to_strings()
    return strings, strings == list(witness.get("residual", strings)), not residual.is_zero()


def engine_defaults():
    return {"degree": engine.DEFAULT_DEGREE, "seed": engine.DEFAULT_SEED, "samples": engine.DEFAULT_SAMPLES}
