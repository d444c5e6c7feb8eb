"""Artifact serialization round-trip and integrity tests."""

import json

import numpy as np
import pytest

from doseguide import cohort, gp, pipeline, store, synthetic, transition
from doseguide.errors import (
    ArtifactDigestError,
    ArtifactTruncatedError,
    ArtifactVersionError,
)


@pytest.fixture(scope="module")
def trained():
    study = synthetic.decision_cohort(n=30, seed=31)
    scaled = cohort.scale_unit_interval(study.records, study.schema)
    cfg = pipeline.RunConfig(
        seed=2,
        predictor=transition.PredictorConfig(seed=2, epochs=300),
        transition_grid=gp.GridSpec(rate_grid=(0.5, 5.0),
                                    precision_grid=(1.0, 10.0), refine=False),
        evaluation_grid=gp.GridSpec(rate_grid=(0.5, 5.0),
                                    precision_grid=(1.0, 4.0), refine=False),
    )
    pipe, _ = pipeline.train_pipeline(scaled, cfg, with_metrics=False)
    verdicts = pipeline.adjudicate_cohort(pipe, scaled, seed=2, n_samples=200,
                                          patient_index=np.arange(12))
    try:
        pipe = pipeline.fit_cohort_compensation(pipe, scaled, verdicts)
    except Exception:
        pass
    return scaled, pipe


def probe_states(scaled, count=10, seed=0):
    rng = np.random.default_rng(seed)
    t = 2
    out = []
    for _ in range(count):
        i = rng.integers(0, scaled.n)
        out.append((scaled.states[t, i], rng.uniform(1.6, 4.9)))
    return out


class TestRoundTrip:
    def test_identical_whatif_outputs(self, trained):
        scaled, pipe = trained
        data = store.serialize(pipe)
        back = store.restore(data)
        for s, dose in probe_states(scaled):
            raw = scaled.inverse_scale_state(s)
            a = pipe.whatif(raw, [dose], seed=5, n_samples=200)
            b = back.whatif(raw, [dose], seed=5, n_samples=200)
            assert a == b  # bit-identical numbers after round trip

    def test_identical_verdicts(self, trained):
        scaled, pipe = trained
        back = store.restore(store.serialize(pipe))
        va = pipe.decide_scaled(scaled.states[2, 3], 2.5, seed=11,
                                n_samples=150)
        vb = back.decide_scaled(scaled.states[2, 3], 2.5, seed=11,
                                n_samples=150)
        assert va.p_value == vb.p_value
        assert va.ai_dose_gy == vb.ai_dose_gy
        np.testing.assert_array_equal(va.ai_reward.samples,
                                      vb.ai_reward.samples)

    def test_compensation_round_trip(self, trained):
        scaled, pipe = trained
        if pipe.compensation_model is None:
            pytest.skip("no qualifying verdicts in fixture")
        back = store.restore(store.serialize(pipe))
        a = pipe.compensation_map(5)
        b = back.compensation_map(5)
        assert a == b

    def test_serialization_deterministic(self, trained):
        _, pipe = trained
        assert store.serialize(pipe) == store.serialize(pipe)

    def test_digest_matches_payload(self, trained):
        _, pipe = trained
        data = store.serialize(pipe)
        payload = json.loads(data)
        stated = payload.pop("digest")
        assert stated == store._digest(payload)


class TestIntegrity:
    def test_corrupted_numeric_byte_fails_digest(self, trained):
        _, pipe = trained
        data = store.serialize(pipe)
        # flip one digit inside the payload, keeping valid JSON
        idx = data.index(b'"train_inputs":[[0.')
        pos = idx + len(b'"train_inputs":[[0.') + 1
        original = data[pos:pos + 1]
        replacement = b"7" if original != b"7" else b"3"
        corrupted = data[:pos] + replacement + data[pos + 1:]
        with pytest.raises(ArtifactDigestError):
            store.restore(corrupted)

    def test_future_version_rejected_names_both(self, trained):
        _, pipe = trained
        payload = json.loads(store.serialize(pipe))
        payload["format_version"] = 99
        with pytest.raises(ArtifactVersionError) as err:
            store.restore(json.dumps(payload).encode())
        assert err.value.found == 99
        assert err.value.supported == 1

    def test_truncated_stream(self, trained):
        _, pipe = trained
        data = store.serialize(pipe)
        with pytest.raises(ArtifactTruncatedError):
            store.restore(data[: len(data) // 2])

    def test_missing_digest(self, trained):
        _, pipe = trained
        payload = json.loads(store.serialize(pipe))
        payload.pop("digest")
        with pytest.raises(ArtifactTruncatedError, match="digest"):
            store.restore(json.dumps(payload).encode())

    def test_save_and_load_file(self, trained, tmp_path):
        scaled, pipe = trained
        path = tmp_path / "model.json"
        store.save(pipe, path)
        back = store.load(path)
        assert store.digest_of(back) == store.digest_of(pipe)
