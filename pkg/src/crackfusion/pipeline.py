"""Pipeline stages. Each stage reads and writes declared files only."""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import PipelineConfig
from .dataio import (
    Dataset,
    FatigueTest,
    MeasurementRecord,
    load_dataset,
    load_predictions,
    load_truth,
    save_dataset,
    save_predictions,
    synthesize_dataset,
)
from .dsp import (
    FrequencyBand,
    bandpass_filter,
    burst_template,
    locate_windows,
    pearson,
    select_global_band,
)
from .errors import ValidationError
from .features import FEATURE_NAMES, Baseline, FeatureVector, build_baseline, extract_features
from .fracture import (
    CrackGrowthCurve,
    GeometrySpec,
    GrowthPathDistribution,
    ParisParams,
    default_crack_grid,
    fit_growth_distribution,
    fit_paris,
    fit_width,
)
from .loading import LoadBlock, LoadingSpec
from .mlp import load_model, penalty_weights, predict, save_model, train
from .pf import Observation, PFConfig, TuningCase, run_filter, tune_noise

FEATURE_HEADER = ("test", "cycle") + FEATURE_NAMES + ("crack_length_mm",)
FORMAT_VERSION = 1


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _read_json(path: Path, what: str):
    if not path.is_file():
        raise ValidationError(f"missing {what}: {path} (run the earlier stage first)")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} is not valid JSON: {exc}") from None


@dataclass(frozen=True)
class Layout:
    """Where every stage reads and writes, relative to the output directory."""

    out: Path
    config: PipelineConfig

    @property
    def dataset(self) -> Path:
        return self.out / self.config.paths.dataset

    @property
    def model(self) -> Path:
        return self.out / self.config.paths.model

    band = property(lambda self: self.out / "band.json")
    denoise = property(lambda self: self.out / "denoise.csv")
    windows = property(lambda self: self.out / "windows.csv")
    features = property(lambda self: self.out / "features.csv")
    paris = property(lambda self: self.out / "paris.json")
    loss = property(lambda self: self.out / "loss_history.csv")
    predictions = property(lambda self: self.out / "predictions")
    evaluation = property(lambda self: self.out / "evaluation.json")
    plot_data = property(lambda self: self.out / "plot_data.csv")


# ------------------------------------------------------------- simulate

def simulate(layout: Layout, seed: int) -> Dataset:
    ds = synthesize_dataset(layout.config.simulate, seed)
    save_dataset(ds, layout.dataset)
    return ds


# ----------------------------------------------------------------- dsp

def zero_crack_record(test: FatigueTest) -> MeasurementRecord:
    first = test.measurements[0] if test.measurements else None
    if first is None or first.cycle != 0 or not first.has_signals:
        raise ValidationError(f"test {test.id}: missing baseline measurement "
                              "(no signal-bearing record at cycle 0)")
    return first


def dataset_band(ds: Dataset, energy_fraction: float) -> FrequencyBand:
    """Band from the mean actuation spectrum of every test's baseline record."""
    return select_global_band([zero_crack_record(t).actuation for t in ds.tests],
                              energy_fraction)


def _mean_pairwise(signals) -> float:
    vals = [pearson(a.samples, b.samples) for a, b in itertools.combinations(signals, 2)]
    return float(np.mean(vals))


def denoise(layout: Layout) -> dict:
    """Band selection plus raw-vs-bandpass correlation of baseline received signals."""
    ds = load_dataset(layout.dataset)
    band = dataset_band(ds, layout.config.dsp.energy_fraction)
    received = [zero_crack_record(t).received for t in ds.tests]
    if len(received) < 2:
        raise ValidationError("need at least two tests to compare received signals")
    raw = _mean_pairwise(received)
    filtered = _mean_pairwise([bandpass_filter(s, band) for s in received])
    _write_json(layout.band, {"low_hz": band.low_hz, "high_hz": band.high_hz,
                              "energy_fraction": layout.config.dsp.energy_fraction})
    with open(layout.denoise, "w", newline="") as fh:
        fh.write("stage,mean_correlation\n")
        fh.write(f"raw,{raw:.6f}\nbandpass,{filtered:.6f}\n")
    return {"band": band, "raw": raw, "bandpass": filtered}


def windows(layout: Layout) -> list[dict]:
    ds = load_dataset(layout.dataset)
    cfg = layout.config.dsp
    band = dataset_band(ds, cfg.energy_fraction)
    rows = []
    for t in ds.tests:
        zero_crack_record(t)
        for r in t.measurements:
            if not r.has_signals:
                continue
            act = bandpass_filter(r.actuation, band)
            wp = locate_windows(burst_template(act, energy_fraction=cfg.template_energy),
                                bandpass_filter(r.received, band))
            rows.append({"test": t.id, "cycle": r.cycle, **asdict(wp)})
    with open(layout.windows, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["test", "cycle", "first_start", "second_start", "length",
                    "first_corr", "second_corr"])
        for r in rows:
            w.writerow([r["test"], r["cycle"], r["first_start"], r["second_start"], r["length"],
                        f"{r['first_corr']:.6f}", f"{r['second_corr']:.6f}"])
    return rows


# ------------------------------------------------------------ features

@dataclass(frozen=True)
class FeatureRow:
    test: str
    cycle: int
    features: FeatureVector
    crack_length_mm: float | None


def features_of_test(test: FatigueTest, band: FrequencyBand, template_energy: float = 0.98,
                  bins: int = 64) -> list[FeatureRow]:
    """Features of every signal-bearing record, against the test's own baseline."""
    base_rec = zero_crack_record(test)
    baseline: Baseline = build_baseline(base_rec.actuation, base_rec.received, band,
                                        template_energy)
    return [
        FeatureRow(test.id, r.cycle, extract_features((r.actuation, r.received), baseline,
                                                      band, bins), r.crack_length_mm)
        for r in test.measurements if r.has_signals
    ]


def write_features(path: Path, rows: Sequence[FeatureRow]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(FEATURE_HEADER) + "\n")
        for r in rows:
            vals = [_fmt(v) for v in r.features.as_array()]
            a = "" if r.crack_length_mm is None else _fmt(r.crack_length_mm)
            fh.write(",".join([r.test, str(r.cycle), *vals, a]) + "\n")


def read_features(path: Path) -> list[FeatureRow]:
    if not path.is_file():
        raise ValidationError(f"missing feature CSV: {path} (run `features` first)")
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if tuple(next(reader, ())) != FEATURE_HEADER:
            raise ValidationError(f"bad feature header in {path}")
        for i, rec in enumerate(reader, start=2):
            try:
                tid, cyc, *vals, a = rec
                fv = FeatureVector(*(float(v) for v in vals))
                rows.append(FeatureRow(tid, int(cyc), fv, float(a) if a else None))
            except (ValueError, TypeError):
                raise ValidationError(f"malformed feature row {i} in {path}") from None
    return rows


def features(layout: Layout) -> list[FeatureRow]:
    ds = load_dataset(layout.dataset)
    cfg = layout.config.dsp
    band = dataset_band(ds, cfg.energy_fraction)
    rows = [row for t in ds.tests
            for row in features_of_test(t, band, cfg.template_energy, cfg.entropy_bins)]
    write_features(layout.features, rows)
    return rows


# ----------------------------------------------------------- fracture

def training_curves(ds: Dataset) -> list[CrackGrowthCurve]:
    return [CrackGrowthCurve(t.cycles, t.crack_lengths) for t in ds.training]


def training_loading(ds: Dataset) -> LoadingSpec:
    loads = {t.loading for t in ds.training}
    if len(loads) != 1:
        raise ValidationError("training tests must share one loading program")
    return loads.pop()


def _params_json(p: ParisParams) -> dict:
    return {"C": p.C, "m": p.m}


def _loading_json(ld: LoadingSpec) -> dict:
    return {"blocks": [[b.sigma_max, b.sigma_min, b.cycles] for b in ld.blocks],
            "frequency_hz": ld.frequency_hz}


def _loading_from(d: dict) -> LoadingSpec:
    return LoadingSpec(tuple(LoadBlock(*b) for b in d["blocks"]), d["frequency_hz"])


def distribution_to_json(dist: GrowthPathDistribution) -> dict:
    b = dist.geometry.half_width_b_mm
    return {
        "crack_grid": dist.crack_grid.tolist(),
        "weibull_shape": dist.shapes.tolist(),
        "weibull_scale": dist.scales.tolist(),
        "quantile_cycles": {k: np.asarray(v).tolist() for k, v in dist.quantile_cycles.items()},
        "curves": {k: _params_json(dist.params(k)) for k in ("mean", "lower5", "upper95")},
        "b_mm": None if math.isinf(b) else b,
        "loading": _loading_json(dist.loading),
        "step": dist.step,
    }


def distribution_from_json(d: dict) -> GrowthPathDistribution:
    try:
        b = d["b_mm"]
        return GrowthPathDistribution(
            crack_grid=np.array(d["crack_grid"], float),
            shapes=np.array(d["weibull_shape"], float),
            scales=np.array(d["weibull_scale"], float),
            quantile_cycles={k: np.array(v, float) for k, v in d["quantile_cycles"].items()},
            mean_params=ParisParams(**d["curves"]["mean"]),
            lower5_params=ParisParams(**d["curves"]["lower5"]),
            upper95_params=ParisParams(**d["curves"]["upper95"]),
            loading=_loading_from(d["loading"]),
            geometry=GeometrySpec(math.inf if b is None else float(b)),
            step=float(d["step"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed growth-path distribution: {exc}") from None


def fit_paris_stage(layout: Layout) -> dict:
    ds = load_dataset(layout.dataset, with_signals=False)
    cfg = layout.config.fracture
    curves = training_curves(ds)
    loading = training_loading(ds)
    width = None
    if cfg.b_mm is not None:
        geom = GeometrySpec(cfg.b_mm)
    elif cfg.fit_width:
        width = fit_width(curves, loading)
        geom = width.geometry
    else:
        geom = GeometrySpec()
    per_test = {t.id: _params_json(fit_paris(c, loading, geom))
                for t, c in zip(ds.training, curves)}
    grid = default_crack_grid(curves, cfg.grid_points)
    ids = [t.id for t in ds.training]
    dist = fit_growth_distribution(curves, loading, geom, grid)
    doc = {
        "format_version": FORMAT_VERSION,
        "per_test": per_test,
        "b_mm": None if math.isinf(geom.half_width_b_mm) else geom.half_width_b_mm,
        "width_fit": None if width is None else {
            "b_std_mm": width.b_std_mm,
            "per_test_b_mm": dict(zip(ids, [float(x) for x in width.per_curve_b_mm])),
            "weakly_identified": dict(zip(ids, [bool(w) for w in width.weakly_identified])),
        },
        "distribution": distribution_to_json(dist),
    }
    _write_json(layout.paris, doc)
    return doc


def load_distribution(layout: Layout) -> GrowthPathDistribution:
    return distribution_from_json(_read_json(layout.paris, "Paris fit")["distribution"])


# --------------------------------------------------------------- train

def _roles(ds: Dataset) -> dict[str, str]:
    return {t.id: t.role for t in ds.tests}


def training_table(rows: Sequence[FeatureRow], roles: dict[str, str]):
    """Feature matrix and targets of training-role rows, with a leak guard."""
    X, y = [], []
    for r in rows:
        role = roles.get(r.test)
        if role is None:
            raise ValidationError(f"feature row for unknown test {r.test}")
        if role == "validation":
            if r.crack_length_mm is not None:
                raise ValidationError(
                    f"validation test {r.test} carries crack lengths in the feature table; "
                    "refusing to train on leaked labels")
            continue
        if r.crack_length_mm is None:
            raise ValidationError(f"training row {r.test}@{r.cycle} lacks a crack length")
        X.append(r.features.as_array())
        y.append(r.crack_length_mm)
    if len(X) < 2:
        raise ValidationError("fewer than two training rows")
    return np.array(X), np.array(y)


def train_stage(layout: Layout):
    ds = load_dataset(layout.dataset, with_signals=False)
    X, y = training_table(read_features(layout.features), _roles(ds))
    params, norm, history = train(X, y, layout.config.train)
    save_model(layout.model, params, norm, layout.config.train)
    with open(layout.loss, "w", newline="") as fh:
        fh.write("epoch,cost\n")
        for i, c in enumerate(history):
            fh.write(f"{i},{c!r}\n")
    return params, norm, history


# ------------------------------------------------------------- predict

def _estimates(model, rows: Sequence[FeatureRow]) -> np.ndarray:
    params, norm, _ = model
    return np.maximum(predict(params, norm, [r.features for r in rows]), 0.0)


def _tuning_cases(ds: Dataset, rows: Sequence[FeatureRow], model) -> list[TuningCase]:
    cases = []
    for t in ds.training:
        trs = sorted((r for r in rows if r.test == t.id), key=lambda r: r.cycle)
        if not trs:
            continue
        est = _estimates(model, trs)
        cases.append(TuningCase(np.array([r.cycle for r in trs], float),
                                np.array([r.crack_length_mm for r in trs], float), est,
                                t.loading))
    return cases


def predict_test(layout: Layout, test_id: str, tuned: tuple[float, float] | None = None) -> dict:
    cfg = layout.config
    ds = load_dataset(layout.dataset, with_signals=False)
    test = ds.test(test_id)
    rows = read_features(layout.features)
    model = load_model(layout.model)
    dist = load_distribution(layout)
    own = sorted((r for r in rows if r.test == test_id), key=lambda r: r.cycle)
    if not own:
        raise ValidationError(f"test {test_id}: no observations (no signal-bearing cycles)")
    est = _estimates(model, own)
    obs = [Observation(float(r.cycle), float(e)) for r, e in zip(own, est)]
    last = obs[-1].cycle
    later = [float(r.cycle) for r in test.measurements
             if not r.signal_bearing and r.cycle > last]
    if tuned is None:
        tuned = (cfg.pf.process_noise_std, cfg.pf.obs_noise_std)
        if cfg.tune.enabled:
            probe = PFConfig(cfg.tune.n_particles, cfg.pf.process_noise_std, cfg.pf.obs_noise_std,
                             cfg.pf.resample_threshold, cfg.pf.seed, cfg.pf.a_min, cfg.pf.step)
            tuned = tune_noise(dist, _tuning_cases(ds, rows, model), cfg.tune.grid, probe,
                               cfg.tune.n_observed)
    pf_cfg = PFConfig(cfg.pf.n_particles, tuned[0], tuned[1], cfg.pf.resample_threshold,
                      cfg.pf.seed, cfg.pf.a_min, cfg.pf.step)
    refit = (cfg.predict.refit_constant_amplitude if test.loading.is_constant_amplitude
             else cfg.predict.refit_variable_amplitude)
    res = run_filter(dist, obs, later, test.loading, dist.geometry, pf_cfg, refit=refit)
    layout.predictions.mkdir(parents=True, exist_ok=True)
    save_predictions([(r.cycle, r.mean, r.lower_90, r.upper_90) for r in res.predicted],
                     layout.predictions / f"{test_id}.csv")
    sidecar = {
        "test": test_id,
        "selected_curve": res.selection.name,
        "process_noise_std": tuned[0],
        "obs_noise_std": tuned[1],
        "refit": res.refit,
        "final_params": _params_json(res.move_params),
        "observations": [[o.cycle, o.crack_estimate_mm] for o in obs],
        "filtered": [[r.cycle, r.mean, r.lower_90, r.upper_90] for r in res.filtered],
    }
    _write_json(layout.predictions / f"{test_id}.json", sidecar)
    return sidecar


def predict_stage(layout: Layout, test_ids: Sequence[str] | None = None) -> list[dict]:
    ds = load_dataset(layout.dataset, with_signals=False)
    ids = list(test_ids) if test_ids else [t.id for t in ds.validation]
    if not ids:
        raise ValidationError("no tests to predict")
    out, tuned = [], None
    for tid in ids:
        side = predict_test(layout, tid, tuned)
        tuned = (side["process_noise_std"], side["obs_noise_std"])  # tuning is test-independent
        out.append(side)
    return out


# ------------------------------------------------------------ evaluate

@dataclass(frozen=True)
class PredictionScore:
    test: str
    rmse: float
    penalized_score: float
    residuals: tuple[tuple[float, float], ...]  # (cycle, predicted - true)


@dataclass(frozen=True)
class EvaluationReport:
    tests: tuple[PredictionScore, ...]

    def to_json(self) -> dict:
        return {"tests": {s.test: {"rmse_mm": s.rmse, "penalized_score": s.penalized_score,
                                   "residuals": [list(r) for r in s.residuals]}
                          for s in self.tests}}


def score_predictions(pred: Sequence[tuple[float, float]], truth: Sequence[tuple[float, float]],
                      test_id: str = "?") -> PredictionScore:
    """RMSE and penalized score of (cycle, a) predictions against truth."""
    lookup = {int(round(c)): a for c, a in truth}
    res = []
    for c, a in sorted(pred):
        key = int(round(c))
        if key not in lookup:
            raise ValidationError(f"test {test_id}: cycle mismatch, no truth at cycle {c}")
        res.append((float(key), float(a) - lookup[key]))
    if not res:
        raise ValidationError(f"test {test_id}: no predictions to score")
    d = np.array([r for _, r in res])
    y = np.array([lookup[int(c)] for c, _ in res])
    return PredictionScore(test_id, float(np.sqrt(np.mean(d * d))),
                     float(np.mean(d * d * penalty_weights(y))), tuple(res))


def evaluate_stage(layout: Layout) -> EvaluationReport:
    truth_path = layout.dataset / "truth.csv"
    if not truth_path.is_file():
        raise ValidationError(f"missing truth file {truth_path}")
    truth = load_truth(truth_path)
    files = sorted(layout.predictions.glob("*.csv"))
    if not files:
        raise ValidationError("no prediction files to evaluate (run `predict` first)")
    scores = []
    for f in files:
        tid = f.stem
        if tid not in truth:
            raise ValidationError(f"no truth for test {tid}")
        pred = [(r[0], r[1]) for r in load_predictions(f)]
        scores.append(score_predictions(pred, truth[tid], tid))
    report = EvaluationReport(tuple(scores))
    _write_json(layout.evaluation, report.to_json())
    return report


# ----------------------------------------------------------- plot data

def plot_data(layout: Layout) -> int:
    """Tidy CSV (figure, test, series, x, y) from whatever stage outputs exist."""
    out = []
    ds = load_dataset(layout.dataset, with_signals=False)
    for t in ds.training:
        out += [("growth_paths", t.id, "measured", c, a) for c, a in zip(t.cycles, t.crack_lengths)]
    if layout.paris.is_file():
        dist = load_distribution(layout)
        for name, cyc in sorted(dist.quantile_cycles.items()):
            out += [("growth_paths", "", f"quantile_{name}", c, a)
                    for c, a in zip(cyc, dist.crack_grid)]
    if layout.features.is_file():
        for r in read_features(layout.features):
            if r.crack_length_mm is None:
                continue
            for name, v in zip(FEATURE_NAMES, r.features.as_array()):
                out.append(("features", r.test, name, r.crack_length_mm, v))
    if layout.loss.is_file():
        with open(layout.loss) as fh:
            next(fh)
            for line in fh:
                e, c = line.strip().split(",")
                out.append(("loss", "", "penalized_cost", int(e), float(c)))
    if layout.denoise.is_file():
        with open(layout.denoise) as fh:
            next(fh)
            for i, line in enumerate(fh):
                stage, v = line.strip().split(",")
                out.append(("denoise", "", stage, i, float(v)))
    truth = load_truth(layout.dataset / "truth.csv") if (layout.dataset / "truth.csv").is_file() else {}
    for f in sorted(layout.predictions.glob("*.csv")) if layout.predictions.is_dir() else []:
        for c, a, lo, hi in load_predictions(f):
            out += [("prognosis", f.stem, "mean", c, a), ("prognosis", f.stem, "lower_90", c, lo),
                    ("prognosis", f.stem, "upper_90", c, hi)]
        side = layout.predictions / f"{f.stem}.json"
        if side.is_file():
            for c, a, _, _ in _read_json(side, "sidecar")["filtered"]:
                out.append(("prognosis", f.stem, "filtered", c, a))
        out += [("prognosis", f.stem, "truth", c, a) for c, a in truth.get(f.stem, ())]
    with open(layout.plot_data, "w", newline="") as fh:
        fh.write("figure,test,series,x,y\n")
        for fig, tid, series, x, y in out:
            fh.write(f"{fig},{tid},{series},{float(x):.6f},{float(y):.6f}\n")
    return len(out)
