import csv
import json
import shutil
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sceneforge.audio import AudioBuffer, read_wav, write_wav
from sceneforge.errors import DegenerateSignalError, InvalidArgumentError
from sceneforge.metrics import (
    EvalOptions,
    aggregate,
    delta_snr,
    estoi,
    evaluate_pairs,
    parse_pesq_output,
    plot_report,
    run_pesq,
    si_snr_db,
    snr_db,
    third_octave_matrix,
)
from sceneforge.renderer import audio_path, build_dataset
from sceneforge.synthetic import noise_signal, speech_like


@pytest.fixture(scope="module")
def speech():
    return speech_like(3.0, 16000, np.random.default_rng(21))


def orthogonal_pair(rng, n=1000):
    ref = rng.standard_normal(n)
    noise = rng.standard_normal(n)
    noise -= noise @ ref / (ref @ ref) * ref
    noise *= np.sqrt((ref @ ref) / (noise @ noise))
    return ref, noise


# -- SNR --------------------------------------------------------------------


def test_snr_identical_is_capped(rng):
    x = rng.standard_normal(100)
    assert snr_db(x, x) == 120.0


def test_snr_orthogonal_equal_energy(rng):
    ref, noise = orthogonal_pair(rng)
    assert snr_db(ref + noise, ref) == pytest.approx(0.0, abs=1e-9)


def test_snr_double_reference(rng):
    ref = rng.standard_normal(100)
    assert snr_db(2 * ref, ref) == pytest.approx(0.0, abs=1e-9)


def test_snr_accepts_buffers(rng):
    ref = rng.standard_normal(50)
    assert snr_db(AudioBuffer.mono(2 * ref, 16000), AudioBuffer.mono(ref, 16000)) == pytest.approx(0.0, abs=1e-9)


def test_snr_errors():
    with pytest.raises(DegenerateSignalError):
        snr_db([1.0, 1.0], [0.0, 0.0])
    with pytest.raises(InvalidArgumentError):
        snr_db([1.0], [1.0, 2.0])


def test_si_snr_ignores_gain(rng):
    ref, noise = orthogonal_pair(rng)
    est = ref + 0.1 * noise
    assert si_snr_db(3 * est, ref) == pytest.approx(si_snr_db(est, ref), abs=1e-9)
    assert si_snr_db(est, ref) == pytest.approx(20.0, abs=0.05)


def test_delta_snr_passthrough(rng):
    ref, noise = orthogonal_pair(rng)
    x = ref + noise
    assert delta_snr(x, x, ref) == 0.0
    assert delta_snr(x, x, ref, scale_invariant=True) == 0.0


def test_delta_snr_to_target(rng):
    ref, noise = orthogonal_pair(rng)
    x = ref + noise
    assert delta_snr(x, ref, ref) == pytest.approx(120 - snr_db(x, ref))


def test_delta_snr_constructed_ten_db(rng):
    ref, noise = orthogonal_pair(rng)
    mixture = ref + noise  # 0 dB
    enhanced = ref + noise / np.sqrt(10)  # 10 dB
    assert abs(delta_snr(mixture, enhanced, ref) - 10.0) <= 0.01


# -- ESTOI ------------------------------------------------------------------


def test_third_octave_bands():
    obm, centres = third_octave_matrix()
    assert obm.shape == (15, 257)
    assert centres[0] == 150 and centres[-1] == pytest.approx(150 * 2 ** (14 / 3))
    assert set(np.unique(obm)) <= {0.0, 1.0}
    assert np.all(obm.sum(axis=0) <= 1)  # bands do not overlap


def test_estoi_self(speech):
    assert estoi(speech, speech, 16000) == pytest.approx(1.0, abs=1e-8)


def test_estoi_white_noise(speech):
    for seed in range(10):
        noise = np.random.default_rng(seed).standard_normal(speech.size)
        assert abs(estoi(noise, speech, 16000)) < 0.2


def test_estoi_monotone_in_snr(speech):
    noise = noise_signal(speech.size / 16000, 16000, np.random.default_rng(3), "pink")
    noise = noise * np.sqrt(np.sum(speech**2) / np.sum(noise**2))
    scores = [estoi(speech + noise * 10 ** (-snr / 20), speech, 16000) for snr in (-10, -5, 0, 5, 10, 20)]
    assert all(b > a for a, b in zip(scores, scores[1:]))


@settings(max_examples=25, deadline=None)
@given(gain=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_estoi_gain_invariant(speech, gain, seed):
    est = speech + 0.5 * np.random.default_rng(seed).standard_normal(speech.size) * speech.std()
    assert abs(estoi(gain * est, speech, 16000) - estoi(est, speech, 16000)) <= 1e-10


def test_estoi_range(speech, rng):
    for _ in range(5):
        est = rng.standard_normal(speech.size) * rng.uniform(0, 2) + speech * rng.uniform(-1, 1)
        assert -1 <= estoi(est, speech, 16000) <= 1


@pytest.mark.parametrize("rate, tol", [(10000, 1e-9), (16000, 1e-4)])
def test_estoi_matches_reference_implementation(rate, tol):
    pystoi = pytest.importorskip("pystoi")
    r = np.random.default_rng(rate)
    s = speech_like(2.5, rate, r)
    for k in (0.2, 1.0, 3.0):
        x = s + k * noise_signal(2.5, rate, r, "white")
        assert abs(estoi(x, s, rate) - pystoi.stoi(s, x, rate, extended=True)) <= tol


def test_estoi_errors(speech):
    with pytest.raises(InvalidArgumentError):
        estoi(speech[:4000], speech[:4000], 16000)  # 0.25 s
    with pytest.raises(InvalidArgumentError):
        estoi(speech, speech[:-1], 16000)
    with pytest.raises(DegenerateSignalError):
        estoi(speech, np.zeros_like(speech), 16000)
    burst = np.zeros(16000)
    burst[:2000] = speech[:2000]  # only a handful of frames above the 40 dB floor
    with pytest.raises(InvalidArgumentError):
        estoi(burst, burst, 16000)


# -- PESQ hook --------------------------------------------------------------


@pytest.mark.parametrize(
    "text, score",
    [
        ("3.21\n", 3.21),
        ("Prediction : PESQ_MOS = 2.875\n", 2.875),
        ("P.862 Prediction (Raw MOS, MOS-LQO):  = 2.456   2.118\n", 2.118),
        ("loading...\nscore 1.5\ndone\n", 1.5),
        ("model v2\nMOS = 4.1\n", 4.1),
    ],
)
def test_parse_pesq_output(text, score):
    assert parse_pesq_output(text) == score


def test_parse_pesq_output_empty():
    with pytest.raises(ValueError):
        parse_pesq_output("no score here\n")


@pytest.fixture
def fake_pesq(tmp_path):
    """A command that prints a score derived from the degraded file name."""
    script = tmp_path / "fake_pesq.py"
    script.write_text(
        "import sys\n"
        "ref, deg, rate = sys.argv[1:4]\n"
        "assert rate == '16000'\n"
        "print('P.862 Prediction (Raw MOS, MOS-LQO):  = 9.0   ' + ('3.5' if 'enh' in deg else '2.0'))\n"
    )
    return f"{sys.executable} {script} {{ref}} {{deg}} {{rate}}"


def test_run_pesq(fake_pesq, tmp_path):
    assert run_pesq(fake_pesq, tmp_path / "r.wav", tmp_path / "enh.wav", 16000) == 3.5


def test_run_pesq_failure(tmp_path):
    with pytest.raises(RuntimeError):
        run_pesq(f"{sys.executable} -c 'import sys; sys.exit(3)'", "r", "d", 16000)


# -- dataset evaluation -----------------------------------------------------


@pytest.fixture(scope="module")
def dataset(fixture_manifest, fixture_catalog, tmp_path_factory):
    out = tmp_path_factory.mktemp("dataset")
    m = fixture_manifest
    from sceneforge.sampler import DatasetManifest

    three = DatasetManifest(m.dataset_seed, m.config, m.pool_fingerprint, m.target_hours, m.scenes[:3])
    build_dataset(three, fixture_catalog, out)
    return out, three


def copy_role(dataset_dir, manifest, role, dest):
    dest.mkdir(exist_ok=True)
    for spec in manifest.scenes:
        shutil.copy(audio_path(dataset_dir, spec.scene_id, role), dest / audio_path("", spec.scene_id, "mixture").name)
    return dest


def test_evaluate_passthrough(dataset, tmp_path):
    root, m = dataset
    report = evaluate_pairs(root, copy_role(root, m, "mixture", tmp_path / "enh"))
    assert report.scene_count == 3
    assert report.aggregate["delta_snr_db"]["mean"] == 0.0
    assert report.aggregate["delta_estoi"]["mean"] == 0.0
    for row in report.per_scene:
        assert row["delta_snr_db"] == 0.0


def test_evaluate_with_targets(dataset, tmp_path):
    root, m = dataset
    report = evaluate_pairs(root, copy_role(root, m, "target", tmp_path / "enh"), EvalOptions(workers=3))
    estoi_in = np.mean([row["estoi_in"] for row in report.per_scene])
    assert report.aggregate["delta_estoi"]["mean"] == pytest.approx(1 - estoi_in, abs=1e-8)
    assert report.aggregate["delta_estoi"]["mean"] > 0
    for row in report.per_scene:
        spec = m.scenes[row["scene_id"]]
        assert abs(row["snr_in_db"] - spec.snr_db) <= 0.01  # metric agrees with the mixing SNR
        assert -2 <= row["delta_estoi"] <= 2


def test_evaluate_missing_files(dataset, tmp_path):
    root, m = dataset
    enh = copy_role(root, m, "mixture", tmp_path / "enh")
    (enh / "000001_mixture.wav").unlink()
    report = evaluate_pairs(root, enh)
    assert report.missing == [1] and report.scene_count == 2


def test_evaluate_length_mismatch(dataset, tmp_path):
    root, m = dataset
    enh = copy_role(root, m, "mixture", tmp_path / "enh")
    f = enh / "000000_mixture.wav"
    buf = read_wav(f)
    write_wav(f, AudioBuffer(buf.samples[:, :-100], buf.rate))
    strict = evaluate_pairs(root, enh)
    assert [e["scene_id"] for e in strict.errors] == [0]
    trimmed = evaluate_pairs(root, enh, EvalOptions(trim=True))
    assert trimmed.scene_count == 3 and not trimmed.errors


def test_evaluate_with_pesq_hook(dataset, tmp_path, fake_pesq):
    root, m = dataset
    enh = copy_role(root, m, "target", tmp_path / "enh")
    report = evaluate_pairs(root, enh, EvalOptions(pesq_command=fake_pesq, pesq_concurrency=2, workers=2))
    # The fake scorer tells enhanced files apart by their directory name.
    assert all(row["pesq_out"] == 3.5 and row["pesq_in"] == 2.0 for row in report.per_scene)
    assert report.aggregate["delta_pesq"] == {"mean": 1.5, "std": 0.0}


def test_report_outputs(dataset, tmp_path):
    root, m = dataset
    report = evaluate_pairs(root, copy_role(root, m, "target", tmp_path / "enh"))
    report.write_json(tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["scene_count"] == 3
    report.write_csv(tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert len(rows) == 3 and "delta_estoi" in rows[0]
    pytest.importorskip("matplotlib")
    plot_report(report, tmp_path / "r.svg")
    first = (tmp_path / "r.svg").read_bytes()
    assert first.startswith(b"<?xml")
    plot_report(report, tmp_path / "r.svg")
    assert (tmp_path / "r.svg").read_bytes() == first


@given(values=st.lists(st.floats(-50, 50), min_size=1, max_size=20), seed=st.integers(0, 100))
def test_aggregate_mean_and_permutation(values, seed):
    rows = [{"delta_snr_db": v} for v in values]
    agg = aggregate(rows)["delta_snr_db"]
    assert agg["mean"] == pytest.approx(np.mean(values), abs=1e-9)
    shuffled = list(np.random.default_rng(seed).permutation(rows))
    assert aggregate(shuffled)["delta_snr_db"]["mean"] == pytest.approx(agg["mean"], abs=1e-9)
