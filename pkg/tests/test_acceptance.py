"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line, then asserts. Run with
``pytest tests/test_acceptance.py -s`` to see the lines alongside pytest's
own output (they are also printed without ``-s``).
"""

import time
from pathlib import Path

import numpy as np
import pytest

from clustermatch.cli import main
from clustermatch.datasets import Dataset, synthesize_dataset
from clustermatch.descriptor import Cluster, descriptor_array
from clustermatch.experiments import Arm, noise_sweep, padding_study, seeded_cluster
from clustermatch.matching import MatchConfig, match_datasets, squared_mahalanobis
from clustermatch.metrics import chi2_threshold
from clustermatch.montecarlo import STREAM_CALIBRATION, stream
from clustermatch.unscented import NoiseModel, UtParams, unscented_transform, ut_descriptor_distribution

from .conftest import random_rotation


@pytest.fixture
def report(capsys):
    t0 = time.perf_counter()

    def emit(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  {label}  {detail}  [{time.perf_counter() - t0:.1f}s]")
        assert ok, f"{label}: {detail}"

    return emit


def test_chi2_gate(report):
    t = chi2_threshold(0.95, 2)
    report("1 chi-square gate at 0.95, dof 2", abs(t - 5.9915) <= 1e-3, f"threshold={t:.6f}")


def test_ut_linear_exactness(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        L = int(rng.integers(3, 19))
        mean = rng.normal(size=L)
        a = rng.normal(size=(L, L))
        cov = a @ a.T / L + 0.01 * np.eye(L)
        A = rng.normal(size=(int(rng.integers(1, 6)), L))
        y_mean, y_cov, _ = unscented_transform(lambda x: x @ A.T, mean, cov, UtParams())
        m_ref, c_ref = A @ mean, A @ cov @ A.T
        worst = max(
            worst,
            np.abs(y_mean - m_ref).max() / np.abs(m_ref).max(),
            np.abs(y_cov - c_ref).max() / np.abs(c_ref).max(),
        )
    report("2 UT exact on linear maps (20 priors)", worst <= 1e-9, f"max relative error={worst:.2e}")


def test_ut_mc_agreement(report):
    rows = noise_sweep(trials=10_000, seed=0, n_flowers=3)
    f = [r.frobenius_norm for r in rows]
    pct = [r.outlier_pct for r in rows]
    ok = all(4.0 <= p <= 6.0 for p in pct) and all(a < b for a, b in zip(f, f[1:])) and f[-1] > 10 * f[0]
    detail = "frobenius=" + ",".join(f"{x:.2e}" for x in f) + " outlier%=" + ",".join(f"{p:.2f}" for p in pct)
    report("3 UT vs Monte Carlo over noise 0.01..0.05", ok, detail)


def test_padding_study(report):
    without, with_pad = padding_study([Arm(0.01, 0.0), Arm(0.01, 0.005)], samples=10_000, seed=0)
    ok = (
        with_pad.correct_matches > without.correct_matches
        and with_pad.avg_false_positives > without.avg_false_positives
    )
    detail = (
        f"correct {without.correct_matches}->{with_pad.correct_matches}, "
        f"avg FP {without.avg_false_positives:.2f}->{with_pad.avg_false_positives:.2f}"
    )
    report("4 padding 0.005 raises correct matches and false positives", ok, detail)


def test_self_match(report):
    base = seeded_cluster(0, 3)
    ds = synthesize_dataset(base, 1000, NoiseModel(0.01), seed=1, name="self")
    cfg = MatchConfig(0.95)
    self_rate = match_datasets(ds, ds, NoiseModel(0.01), cfg=cfg).summary()["diagonal_match_rate"]
    # every noisy frame gated against the noise-free cluster's distribution
    truth = Dataset([base] * len(ds), 3, "truth")
    truth_rate = match_datasets(truth, ds, NoiseModel(0.01), cfg=cfg).summary()["diagonal_match_rate"]
    ok = self_rate >= 0.93 and truth_rate >= 0.93
    report("5 self-match of 1000 frames at sigma 0.01", ok, f"self={self_rate:.4f} against truth={truth_rate:.4f}")


def test_count_gate(report):
    ref = Dataset([seeded_cluster(0, 3)], 3, "ref")
    obs = synthesize_dataset(seeded_cluster(1, 4), 200, NoiseModel(0.01), seed=2, name="obs")
    rep = match_datasets(ref, obs, NoiseModel(0.01), cfg=MatchConfig(0.999999, padding=1e3), aligned=False)
    n = int(rep.matched.sum())
    report("6 flower-count gate", n == 0, f"matches={n}")


def test_descriptor_invariance(report):
    rng = np.random.default_rng(7)
    worst_rigid = worst_scale = 0.0
    bound_ok = True
    for _ in range(1000):
        n = int(rng.integers(2, 12))
        pts = rng.uniform(-1, 1, (n, 3))
        d = descriptor_array(pts)
        moved = (pts @ random_rotation(rng).T + rng.uniform(-5, 5, 3))[rng.permutation(n)]
        worst_rigid = max(worst_rigid, np.abs(descriptor_array(moved) - d).max())
        s = rng.uniform(0.1, 10)
        ds = descriptor_array(s * pts)
        worst_scale = max(worst_scale, abs(ds[0] / (s * s * d[0]) - 1), abs(ds[1] / (s * d[1]) - 1))
        bound_ok &= d[0] >= n * d[1] ** 2 * (1 - 1e-12)
    ok = worst_rigid <= 1e-9 and worst_scale <= 1e-9 and bound_ok
    report(
        "7 descriptor invariances and bounds (1000 clusters)",
        ok,
        f"rigid={worst_rigid:.1e} scale={worst_scale:.1e} inertia>=N*avg^2={bound_ok}",
    )


def test_calibration(report):
    dist = ut_descriptor_distribution(seeded_cluster(0, 3), NoiseModel(0.01))
    xs = stream(0, STREAM_CALIBRATION).multivariate_normal(dist.mean, dist.cov, size=10_000)
    rate = 100.0 * np.mean(squared_mahalanobis(xs, dist) >= chi2_threshold(0.95))
    report("8 calibration of the 95% gate", abs(rate - 5.0) <= 0.6, f"non-match rate={rate:.2f}%")


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _run_all(root: Path, workers: int) -> dict:
    w = ["--workers", str(workers)]
    data = root / "data"
    cmds = [
        ["synth", "--out", data, "--frames", "300", "--seed", "5", "--corruption", "0.05", "--name", "ref"],
        ["synth", "--out", data, "--frames", "300", "--seed", "6", "--noise", "0.015", "--name", "obs"],
        ["simulate", "--trials", "3000", "--out", root / "simulate"],
        ["padding-study", "--samples", "2000", "--out", root / "padding"],
        ["match", data / "ref.jsonl", data / "obs.jsonl", "--padding", "1e-5", "--out", root / "match"],
        ["describe", data / "ref.jsonl", "--frame", "3", "--out", root / "describe"],
    ]
    for c in cmds:
        assert main([str(a) for a in c] + w) == 0, c
    return _tree(root)


def test_cli_determinism(report, tmp_path):
    first = _run_all(tmp_path / "a", 1)
    again = _run_all(tmp_path / "b", 1)
    parallel = _run_all(tmp_path / "c", 8)
    differ = sorted(k for k in first if first[k] != again.get(k) or first[k] != parallel.get(k))
    ok = len(first) >= 10 and not differ and first.keys() == parallel.keys()
    report("9 CLI outputs byte-identical across runs and worker counts", ok, f"files={len(first)} differing={differ}")
