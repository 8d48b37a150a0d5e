import json
import os
from pathlib import Path

import numpy as np
import pytest

import atrousfov as af

ROOT = Path(__file__).resolve().parents[2]
CONFIGS = Path(os.environ.get("ATROUSFOV_TEST_CONFIGS", ROOT / "configs"))
SCHEMA = Path(os.environ.get("ATROUSFOV_TEST_SCHEMA", ROOT / "docs" / "report.schema.json"))

SMALL_NET = """\
input size=32 channels=3
encoder stride=2 channels=4
head aspp rate=2 branches=4 image_pool=off
classes 2
seed 7
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.net"
    path.write_text(SMALL_NET)
    return str(path)


def validate(report):
    jsonschema = pytest.importorskip("jsonschema")
    jsonschema.validate(report, json.loads(SCHEMA.read_text()))
    assert af.validate_report(report) == []


def test_advisor():
    assert af.legacy_rate(16) == 6
    assert af.legacy_rate(8) == 12
    assert round(af.optimal_rate(769, 8), 2) == 15.35
    rows = af.guideline_table()
    assert len(rows) == 20
    assert "769 8 15.35 15" in rows
    assert af.validate_config(512, 16, 6)["diagnosis"] == "invalid-kernel-region"
    report = af.advise(512, 512, 16, rate=6)
    assert report["r_rounded"] == 5
    validate({"schema": af.REPORT_SCHEMA, "command": "advise", "advisor": report})
    with pytest.raises(ValueError):
        af.optimal_rate(16, 16)


def test_tensor_random_is_deterministic():
    a = af.tensor_random(4, 5, 3, seed=9, scale=2.0)
    b = af.tensor_random(4, 5, 3, seed=9, scale=2.0)
    assert a.shape == (4, 5, 3)
    assert np.array_equal(a, b)
    assert np.abs(a).max() <= 2.0


def test_conv2d_against_numpy():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (9, 9, 2))
    w = rng.uniform(-1, 1, (3, 3, 2, 4))
    y = af.conv2d(x, w, dilation=2, padding=2)
    pad = np.pad(x, ((2, 2), (2, 2), (0, 0)))
    want = np.zeros((9, 9, 4))
    for i in range(3):
        for j in range(3):
            want += np.einsum("hwc,co->hwo", pad[2 * i:2 * i + 9, 2 * j:2 * j + 9], w[i, j])
    assert np.allclose(y, want, atol=1e-12)

    gy = rng.uniform(-1, 1, y.shape)
    gx = af.conv2d_input_grad(gy, w, (9, 9, 2), dilation=2, padding=2)
    # Adjoint identity: <gy, conv(x)> == <conv^T(gy), x>.
    assert np.isclose(np.sum(gy * y), np.sum(gx * x))


def test_star_prediction():
    g = af.predict_star(6, 16, (383, 384))
    assert g["center_to_center_bottom"] == 576
    assert len(g["taps"]) == 25
    assert af.predict_star(12, 8, (383, 384))["taps"] == g["taps"]
    assert af.predict_fcn_d6_span(6, 16) == 384


def test_peaks_and_fit():
    m = af.sample_gaussian(64, 80, amplitude=2.0, x_c=41.3, y_c=30.25, sigma_x=6.0, sigma_y=4.0)
    peaks = af.detect_peaks(m, window=5, threshold_frac=0.5)
    assert len(peaks) == 1
    # A blob centered exactly between two pixels has no strict maximum.
    tie = af.sample_gaussian(64, 80, amplitude=2.0, x_c=41.5, y_c=30.0, sigma_x=6.0, sigma_y=4.0)
    assert af.detect_peaks(tie, window=5, threshold_frac=0.5) == []
    assert peaks[0][:2] == (30, 41)
    fit = af.fit_gaussian(m)
    assert fit["converged"]
    assert fit["x_c"] == pytest.approx(41.3, abs=1e-3)
    assert fit["sigma_y"] == pytest.approx(4.0, abs=1e-3)


def test_erf_pipeline(small_config, tmp_path):
    erf = af.erf(small_config, n_images=3, seed=1, threads=1)
    assert erf.shape == (32, 32)
    assert (erf >= 0).all()
    assert np.array_equal(erf, af.erf(small_config, n_images=3, seed=1, threads=2))

    report = af.run_erf(small_config, n_images=3, seed=1, out_dir=str(tmp_path / "out"))
    validate(report)
    for path in report["files"].values():
        assert Path(path).exists()
    dump = af.load_tensor(report["files"]["erf_raw"])
    assert np.array_equal(dump[:, :, 0], erf)

    result = af.analyze(erf, rate=2, stride=2, fit_gaussian=True)
    assert result["star"]["center_to_center_bottom"] == 24
    assert result["gaussian_fit"] is not None


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.net"
    bad.write_text("encoder stride=12\nhead aspp rate=6\n")
    with pytest.raises(af.ConfigError, match="line 1"):
        af.erf(str(bad), n_images=1)


def test_shipped_configs_exist():
    names = {p.name for p in CONFIGS.glob("*.net")}
    assert "aspp_r6_s16.net" in names
