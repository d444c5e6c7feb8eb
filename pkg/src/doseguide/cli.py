"""Batch command-line driver for the retrospective pipeline.

Commands: preprocess, train, evaluate, decide, compensate, serve, simulate.
Every command reads one JSON config (the same dialect as model artifacts),
honors --seed/--out overrides, and embeds the config snapshot plus model
digest in each output file, so identical configs produce byte-identical
outputs.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, store, synthetic
from .cohort import (
    load_cohort,
    scale_unit_interval,
    write_cohort_csv,
)
from .errors import DoseguideError, InsufficientDataError
from .pipeline import (
    RunConfig,
    adjudicate_cohort,
    fit_cohort_compensation,
    train_pipeline,
)

CONFIG_KEYS = ("states_file", "outcomes_file", "external_predictions_file",
               "model_file", "kind", "n_patients")


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    run = RunConfig.from_dict(raw)
    extras = {k: raw.get(k) for k in CONFIG_KEYS}
    return run, extras, raw


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def _meta_lines(raw_config, model_digest=None):
    lines = [f"# config: {_canonical(raw_config)}"]
    if model_digest is not None:
        lines.append(f"# model_digest: {model_digest}")
    return lines


def write_csv(path, header, rows, raw_config, model_digest=None):
    lines = _meta_lines(raw_config, model_digest)
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(
            repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
            for v in row
        ))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path, payload, raw_config, model_digest=None):
    body = {"config": raw_config, "model_digest": model_digest, **payload}
    Path(path).write_text(
        json.dumps(body, sort_keys=True, indent=1, allow_nan=False) + "\n",
        encoding="utf-8",
    )


def write_manifest(out_dir, command, raw_config, outputs):
    digests = {}
    for name in sorted(outputs):
        data = (out_dir / name).read_bytes()
        digests[name] = hashlib.sha256(data).hexdigest()
    payload = {"command": command, "config": raw_config, "outputs": digests}
    (out_dir / f"{command}_manifest.json").write_text(
        json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


def _load_scaled(run, extras):
    records = load_cohort(extras["states_file"], extras["outcomes_file"],
                          run.schema)
    return scale_unit_interval(records, run.schema)


def _external_text(extras):
    path = extras.get("external_predictions_file")
    if path is None:
        return None
    return Path(path).read_text(encoding="utf-8")


def cmd_preprocess(run, extras, raw, out_dir):
    scaled = _load_scaled(run, extras)
    rows = []
    for t in range(scaled.states.shape[0]):
        for i in range(scaled.n):
            row = [scaled.patient_ids[i], t + 1]
            row += [float(v) for v in scaled.states[t, i]]
            row.append(float(scaled.doses_scaled[t, i]))
            rows.append(row)
    header = ["patient_id", "stage"]
    header += [f"scaled_{v.lower()}" for v in run.schema.names]
    header.append("dose_scaled")
    write_csv(out_dir / "preprocessed.csv", header, rows, raw)
    write_json(out_dir / "scaling.json",
               {"scaling": [s.to_dict() for s in scaled.scaling]}, raw)
    write_manifest(out_dir, "preprocess", raw,
                   ["preprocessed.csv", "scaling.json"])
    return 0


def _train(run, extras):
    scaled = _load_scaled(run, extras)
    pipe, metrics = train_pipeline(scaled, run,
                                   external_text=_external_text(extras))
    return scaled, pipe, metrics


def cmd_train(run, extras, raw, out_dir):
    scaled, pipe, metrics = _train(run, extras)
    model_path = out_dir / "model.json"
    store.save(pipe, model_path)
    digest = store.digest_of(pipe)
    write_json(out_dir / "metrics.json", {"metrics": metrics}, raw, digest)
    write_manifest(out_dir, "train", raw, ["model.json", "metrics.json"])
    print(f"model digest {digest}")
    return 0


def _metric_rows(metrics):
    rows = []
    for entry in metrics["cv_mse"]:
        rows.append([
            entry["variable"],
            entry["dnn_mse"],
            entry["gp_mse"],
            "" if entry["verbatim_ri"] is None else entry["verbatim_ri"],
            "" if entry["standard_ri"] is None else entry["standard_ri"],
        ])
    return rows


def cmd_evaluate(run, extras, raw, out_dir):
    scaled, pipe, metrics = _train(run, extras)
    digest = store.digest_of(pipe)
    write_csv(
        out_dir / "cv_table.csv",
        ["variable", "point_mse", "calibrated_mse", "verbatim_ri",
         "standard_ri"],
        _metric_rows(metrics),
        raw,
        digest,
    )
    write_json(out_dir / "evaluation.json", {"metrics": metrics}, raw, digest)
    write_manifest(out_dir, "evaluate", raw,
                   ["cv_table.csv", "evaluation.json"])
    return 0


def _restore_model(extras, out_dir):
    path = extras.get("model_file") or (out_dir / "model.json")
    if not Path(path).exists():
        raise DoseguideError(
            f"model artifact {path} not found; run the train command first"
        )
    return store.load(path)


def cmd_decide(run, extras, raw, out_dir):
    scaled = _load_scaled(run, extras)
    pipe = _restore_model(extras, out_dir)
    digest = store.digest_of(pipe)
    verdicts = adjudicate_cohort(pipe, scaled, seed=run.seed)
    rows = []
    for pid, _idx, v in verdicts:
        rows.append([
            pid, v.physician_dose_gy, v.ai_dose_gy, v.p_value, v.chosen,
            int(v.reliability_flag), v.ai_reward.mean, v.ai_reward.std,
            v.physician_reward.mean, v.physician_reward.std,
            v.sample_count, v.seed,
        ])
    write_csv(
        out_dir / "verdicts.csv",
        ["patient_id", "physician_dose_gy", "ai_dose_gy", "p_value", "chosen",
         "reliability_flag", "ai_reward_mean", "ai_reward_std",
         "physician_reward_mean", "physician_reward_std", "sample_count",
         "seed"],
        rows,
        raw,
        digest,
    )
    write_manifest(out_dir, "decide", raw, ["verdicts.csv"])
    chosen_ai = sum(1 for _, _, v in verdicts if v.chosen == "AI")
    print(f"{chosen_ai} of {len(verdicts)} verdicts favor the optimizer")
    return 0


def cmd_compensate(run, extras, raw, out_dir):
    scaled = _load_scaled(run, extras)
    pipe = _restore_model(extras, out_dir)
    verdicts = adjudicate_cohort(pipe, scaled, seed=run.seed)
    try:
        pipe = fit_cohort_compensation(pipe, scaled, verdicts)
    except InsufficientDataError as exc:
        print(str(exc), file=sys.stderr)
        return 3
    model_path = extras.get("model_file") or (out_dir / "model.json")
    store.save(pipe, model_path)
    digest = store.digest_of(pipe)
    lattice = pipe.compensation_map(resolution=20)
    rows = []
    for i, v1 in enumerate(lattice["axis1"]):
        for j, v2 in enumerate(lattice["axis2"]):
            rows.append([v1, v2, lattice["delta_gy"][i][j]])
    write_csv(
        out_dir / "compensation_map.csv",
        [f"{lattice['var1'].lower()}", f"{lattice['var2'].lower()}",
         "delta_dose_gy"],
        rows,
        raw,
        digest,
    )
    write_csv(
        out_dir / "compensation_points.csv",
        [f"{lattice['var1'].lower()}", f"{lattice['var2'].lower()}",
         "delta_dose_gy"],
        [[m["var1"], m["var2"], m["delta_gy"]]
         for m in lattice["training_points"]],
        raw,
        digest,
    )
    write_manifest(out_dir, "compensate", raw,
                   ["compensation_map.csv", "compensation_points.csv"])
    return 0


def cmd_simulate(run, extras, raw, out_dir):
    kind = extras.get("kind") or "calibration"
    n = int(extras.get("n_patients") or 80)
    if kind == "calibration":
        study = synthetic.calibration_cohort(n=n, seed=run.seed)
        ext = synthetic.linear_predictions_csv(study.records, study.schema)
        (out_dir / "linear_predictions.csv").write_text(ext, encoding="utf-8")
        outputs = ["states.csv", "outcomes.csv", "ground_truth.json",
                   "linear_predictions.csv"]
    elif kind == "decision":
        study = synthetic.decision_cohort(n=n, seed=run.seed)
        outputs = ["states.csv", "outcomes.csv", "ground_truth.json"]
    else:
        raise DoseguideError(f"unknown simulation kind {kind!r}")
    write_cohort_csv(study.records, out_dir / "states.csv",
                     out_dir / "outcomes.csv", study.schema)
    write_json(out_dir / "ground_truth.json",
               {"kind": kind, "ground_truth": study.ground_truth}, raw)
    write_manifest(out_dir, "simulate", raw, outputs)
    return 0


def cmd_serve(run, extras, raw, out_dir):
    import os

    from .service import main as serve_main

    serve_main(
        host=os.environ.get("DOSEGUIDE_BIND", "127.0.0.1"),
        artifact_dir=str(out_dir),
        default_seed=run.seed,
    )
    return 0


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "decide": cmd_decide,
    "compensate": cmd_compensate,
    "simulate": cmd_simulate,
    "serve": cmd_serve,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="doseguide",
        description="GP-calibrated radiotherapy dose decision support",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", default="out", help="output directory")
    args = parser.parse_args(argv)

    try:
        run, extras, raw = load_config(args.config)
        if args.seed is not None:
            raw["seed"] = args.seed
            run = RunConfig.from_dict(raw)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](run, extras, raw, out_dir)
    except DoseguideError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(json.dumps({"error": "FileNotFoundError", "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
