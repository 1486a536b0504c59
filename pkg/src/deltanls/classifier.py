"""Threshold classification of initial data.

The decision tree compares the scale-invariant ratios ``E M^sc``, ``K M^sc`` and
``N M^sc`` against their ground-state values, plus the virial condition
``cond = em (1 - V'^2 / (32 E V))`` and the sign of ``V'``.  Every comparison
has three outcomes: clearly below, clearly above, or inside a relative band of
width ``tol`` around the boundary.  A rule fires only if all its comparisons
are clear; a rule blocked only by band comparisons makes the verdict
"undetermined at the boundary", which :func:`classify_evolving` resolves by a
short evolution.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .evolution import evolve
from .exceptions import InvalidArgumentError, PropagationError, StepFailure
from .functionals import FunctionalSnapshot, GroundStateRef, ground_state_ref, snapshot
from .grid import PhysParams, Scheme, WaveField, check_power

DEFAULT_TOL = 1e-6


class Label(str, enum.Enum):
    SCATTER_FORWARD = "ScatterForward"
    BLOWUP_FORWARD = "BlowUpForward"
    GROUND_STATE_ORBIT = "GroundStateOrbit"
    THRESHOLD_TRICHOTOMY = "ThresholdTrichotomy"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class RenormalizedQuantities:
    """Ratios to the ground-state values; ``cond_1_11`` and ``x0`` may be None."""

    em: float
    km: float
    nm: float
    cond_1_11: float | None
    x0: float | None
    vprime: float
    energy: float
    variance: float

    @property
    def vprime_normalized(self) -> float:
        """``V'`` divided by ``sqrt(32 |E| V)``, the scale used inside ``cond_1_11``."""
        if self.variance > 0 and self.energy != 0:
            return self.vprime / math.sqrt(32.0 * abs(self.energy) * self.variance)
        return self.vprime


def renormalize(snap: FunctionalSnapshot, ref: GroundStateRef) -> RenormalizedQuantities:
    if not snap.M > 0:
        raise InvalidArgumentError("renormalization needs positive mass")
    ms = snap.M ** ref.sigma_c
    em = snap.E * ms / ref.em_threshold
    cond = None
    if snap.V > 0 and snap.E != 0:
        cond = em * (1.0 - snap.Vp ** 2 / (32.0 * snap.E * snap.V))
    x0 = 16.0 * snap.E * (1.0 - 1.0 / em) if em >= 1.0 else None
    return RenormalizedQuantities(
        em=em,
        km=snap.K * ms / ref.km_threshold,
        nm=snap.N * ms / ref.nm_threshold,
        cond_1_11=cond,
        x0=x0,
        vprime=snap.Vp,
        energy=snap.E,
        variance=snap.V,
    )


@dataclass(frozen=True)
class DynamicsVerdict:
    label: Label
    rule: str
    margins: dict
    quantities: RenormalizedQuantities | None = None
    branch: str | None = None
    boundary: bool = False
    initial: "DynamicsVerdict | None" = None
    probe_time: float | None = None

    def to_dict(self) -> dict:
        """Fixed-key JSON form ``{label, rule, margins}``."""
        return {"label": self.label.value, "rule": self.rule, "margins": dict(self.margins)}

    def to_report(self) -> dict:
        out = self.to_dict()
        out["branch"] = self.branch
        out["boundary_undetermined"] = self.boundary
        if self.quantities is not None:
            out["x0"] = self.quantities.x0
        if self.initial is not None:
            out["initial"] = self.initial.to_report()
            out["probe_time"] = self.probe_time
        return out


_BELOW, _BAND, _ABOVE = -1, 0, 1


def _compare(value: float, boundary: float, tol: float) -> int:
    scale = max(1.0, abs(boundary))
    if abs(value - boundary) <= tol * scale:
        return _BAND
    return _BELOW if value < boundary else _ABOVE


def classify(q: RenormalizedQuantities, vprime_sign: int | None = None,
             tol: float = DEFAULT_TOL) -> DynamicsVerdict:
    """Apply the threshold decision tree; total (always returns a verdict)."""
    vals = (q.em, q.km, q.nm, q.vprime) + ((q.cond_1_11,) if q.cond_1_11 is not None else ())
    if not all(np.isfinite(v) for v in vals):
        raise InvalidArgumentError("renormalized quantities must be finite")
    if vprime_sign is None:
        vprime_cmp = _compare(q.vprime_normalized, 0.0, tol)
    else:
        vprime_cmp = int(np.sign(vprime_sign))
    em = _compare(q.em, 1.0, tol)
    km = _compare(q.km, 1.0, tol)
    nm = _compare(q.nm, 1.0, tol)
    cond = _compare(q.cond_1_11, 1.0, tol) if q.cond_1_11 is not None else None

    margins = {
        "em": q.em - 1.0,
        "km": q.km - 1.0,
        "nm": q.nm - 1.0,
        "cond_1_11": None if q.cond_1_11 is None else q.cond_1_11 - 1.0,
        "vprime": q.vprime,
    }

    def verdict(label, rule, branch=None, boundary=False):
        return DynamicsVerdict(label, rule, margins, q, branch, boundary)

    # each rule is a list of (comparison, accepted outcomes, description)
    rules = [
        (Label.SCATTER_FORWARD, "rule 1: em < 1 and km < 1",
         [(em, {_BELOW}), (km, {_BELOW})]),
        (Label.BLOWUP_FORWARD, "rule 2: em < 1 and km > 1",
         [(em, {_BELOW}), (km, {_ABOVE})]),
        (Label.GROUND_STATE_ORBIT, "rule 3: em = 1 and km = 1",
         [(em, {_BAND}), (km, {_BAND})]),
        (Label.THRESHOLD_TRICHOTOMY, "rule 4: em = 1 and km != 1",
         [(em, {_BAND}), (km, {_BELOW, _ABOVE})]),
        (Label.SCATTER_FORWARD, "rule 5: em >= 1, cond <= 1, nm < 1, V' >= 0",
         [(em, {_ABOVE}), (cond, {_BELOW}), (nm, {_BELOW}), (vprime_cmp, {_ABOVE})]),
        (Label.BLOWUP_FORWARD, "rule 6: cond <= 1, nm > 1, V' <= 0",
         [(cond, {_BELOW}), (nm, {_ABOVE}), (vprime_cmp, {_BELOW})]),
    ]
    blocked = []
    for label, text, conds in rules:
        if all(c is not None and c in ok for c, ok in conds):
            branch = None
            if label is Label.THRESHOLD_TRICHOTOMY:
                branch = ("(i) scatters forward or approaches the ground-state orbit" if km == _BELOW
                          else "(iii) blows up forward or approaches the ground-state orbit")
            return verdict(label, text, branch)
        # blocked purely by band comparisons: each failing condition sits in
        # the band, and putting it on its accepted side would fire the rule
        failing = [(c, ok) for c, ok in conds if c is None or c not in ok]
        if failing and all(c == _BAND for c, _ in failing):
            blocked.append(text.split(":")[0])
    if blocked:
        return verdict(Label.UNDETERMINED,
                       "rule 7: boundary equality blocks " + ", ".join(blocked), boundary=True)
    return verdict(Label.UNDETERMINED, "rule 7: no rule applies")


def classify_field(f: WaveField, p: float, tol: float = DEFAULT_TOL,
                   ref: GroundStateRef | None = None, t: float = 0.0) -> DynamicsVerdict:
    ref = ref or ground_state_ref(p)
    return classify(renormalize(snapshot(f, p, t), ref), tol=tol)


def classify_evolving(u0: WaveField, params: PhysParams, t_probe: float | None = None,
                      tol: float = DEFAULT_TOL, max_doublings: int = 3) -> DynamicsVerdict:
    """Classify ``u0``; if undetermined at a boundary, evolve briefly and retry.

    The first probe runs to ``t_probe`` (default ``10 * dt``); while the
    verdict stays boundary-undetermined the probe time is doubled, at most
    ``max_doublings`` times.
    """
    ref = ground_state_ref(params.p)
    first = classify_field(u0, params.p, tol, ref)
    if not first.boundary:
        return first
    t_probe = 10.0 * params.dt if t_probe is None else t_probe
    if not t_probe > 0:
        raise InvalidArgumentError("probe time must be positive")
    current = first
    for _ in range(max_doublings + 1):
        try:
            series = evolve(u0, params, t_probe, record_stride=10 ** 9)
        except (StepFailure, PropagationError) as exc:
            raise PropagationError(f"probe evolution failed: {exc}",
                                   partial=getattr(exc, "partial", None)) from exc
        state = series.final_state
        current = classify_field(state.field, params.p, tol, ref, t=state.t)
        if not current.boundary:
            break
        t_probe *= 2.0
    return replace(current, initial=first, probe_time=t_probe)


# -- estimator interface ----------------------------------------------------

def _as_fields(X) -> list:
    if isinstance(X, WaveField):
        return [X]
    fields = list(X)
    if not all(isinstance(f, WaveField) for f in fields):
        raise InvalidArgumentError("expected a sequence of WaveField samples")
    return fields


class RenormalizedFeatures(TransformerMixin, BaseEstimator):
    """Map wave fields to ``[em, km, nm, cond_1_11, V'/sqrt(32|E|V)]`` rows."""

    feature_names = ("em", "km", "nm", "cond_1_11", "vprime")

    def __init__(self, p: float = 5.0):
        self.p = p

    def fit(self, X=None, y=None):
        check_power(self.p)
        self.ref_ = ground_state_ref(self.p)
        self.n_features_out_ = len(self.feature_names)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "ref_")
        rows = []
        for f in _as_fields(X):
            q = renormalize(snapshot(f, self.p), self.ref_)
            cond = np.nan if q.cond_1_11 is None else q.cond_1_11
            rows.append([q.em, q.km, q.nm, cond, q.vprime_normalized])
        return np.array(rows, dtype=float).reshape(-1, self.n_features_out_)

    def get_feature_names_out(self, input_features=None):
        return np.array(self.feature_names, dtype=object)


class DynamicsClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around :func:`classify_evolving`.

    Nothing is learned: ``fit`` only validates the parameters and caches the
    ground-state reference.  ``predict`` returns label strings.
    """

    def __init__(self, p: float = 5.0, tol: float = DEFAULT_TOL, probe: bool = True,
                 dt: float = 1e-3, scheme: str = "cn", t_probe: float | None = None):
        self.p = p
        self.tol = tol
        self.probe = probe
        self.dt = dt
        self.scheme = scheme
        self.t_probe = t_probe

    def fit(self, X=None, y=None):
        check_power(self.p)
        if not self.tol > 0:
            raise InvalidArgumentError("tol must be positive")
        self.params_ = PhysParams(p=self.p, dt=self.dt, scheme=Scheme(self.scheme))
        self.ref_ = ground_state_ref(self.p)
        self.classes_ = np.array([lab.value for lab in Label], dtype=object)
        return self

    def predict_verdicts(self, X) -> list:
        check_is_fitted(self, "params_")
        out = []
        for f in _as_fields(X):
            if self.probe:
                out.append(classify_evolving(f, self.params_, self.t_probe, self.tol))
            else:
                out.append(classify_field(f, self.p, self.tol, self.ref_))
        return out

    def predict(self, X) -> np.ndarray:
        return np.array([v.label.value for v in self.predict_verdicts(X)], dtype=object)
