"""Acceptance suite.

Each test implements one acceptance criterion at its stated tolerance and
time budget, and prints one PASS/FAIL line (visible with ``pytest -s`` or
in captured output). Expected values come from closed forms or independent
oracles, never from the code under test.
"""

import math
import time

import numpy as np
import pytest

from genprobe import families, metrics, stats, store
from genprobe.cli import main
from genprobe.lrf import evbmf
from genprobe.spectra import DegenerateSpectrum, WeightTensor, singular_values


class criterion:
    """Context manager printing one ACCEPTANCE PASS/FAIL line per criterion."""

    def __init__(self, name: str, budget_seconds: float):
        self.name = name
        self.budget = budget_seconds

    def __enter__(self):
        self.t0 = time.monotonic()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.monotonic() - self.t0
        ok = exc_type is None and elapsed < self.budget
        print(f"ACCEPTANCE {'PASS' if ok else 'FAIL'}: {self.name} ({elapsed:.2f}s)")
        if exc_type is None and elapsed >= self.budget:
            raise AssertionError(f"{self.name}: exceeded {self.budget}s budget ({elapsed:.1f}s)")
        return False


def test_analytic_metric_suite():
    with criterion("analytic metric suite (identity/rank-1/zero/golden, 1e-9)", 1.0):
        for n in (2, 4, 16):
            s = singular_values(np.eye(n))
            assert abs(metrics.stable_quality(s) - math.atan(n)) <= 1e-9
            assert abs(metrics.effective_rank(s) - math.log(n)) <= 1e-9
            assert abs(metrics.frobenius_norm(s) - math.sqrt(n)) <= 1e-9
            assert abs(metrics.spectral_norm(s) - 1.0) <= 1e-9

        rng = np.random.default_rng(1)
        u, v = rng.standard_normal(5), rng.standard_normal(7)
        scale = float(np.linalg.norm(u) * np.linalg.norm(v))
        s = singular_values(np.outer(u, v))
        assert abs(metrics.stable_quality(s) - math.pi / 4) <= 1e-9
        assert abs(metrics.effective_rank(s) - 0.0) <= 1e-9
        assert abs(metrics.frobenius_norm(s) - scale) <= 1e-9 * scale
        assert abs(metrics.spectral_norm(s) - scale) <= 1e-9 * scale

        s = singular_values(np.zeros((3, 5)))
        assert metrics.frobenius_norm(s) == 0.0
        assert metrics.spectral_norm(s) == 0.0
        with pytest.raises(DegenerateSpectrum):
            metrics.stable_quality(s)
        with pytest.raises(DegenerateSpectrum):
            metrics.effective_rank(s)

        # golden-ratio matrix, closed forms from the Gram polynomial x^2-3x+1
        lam = np.sort(np.roots([1.0, -3.0, 1.0]))[::-1]
        sv = np.sqrt(lam)
        s = singular_values(np.array([[1.0, 1.0], [0.0, 1.0]]))
        sq_exp = math.atan((np.sum(sv**2) / sv[0] ** 2) / (sv[0] / sv[1]))
        p = sv / sv.sum()
        er_exp = float(-np.sum(p * np.log(p)))
        assert abs(metrics.stable_quality(s) - sq_exp) <= 1e-9
        assert abs(metrics.effective_rank(s) - er_exp) <= 1e-9
        assert abs(metrics.frobenius_norm(s) - math.sqrt(3)) <= 1e-9
        assert abs(metrics.spectral_norm(s) - sv[0]) <= 1e-9


def test_svd_gram_eigenvalue_oracle():
    with criterion("SVD vs Gram-eigenvalue oracle (50 matrices up to 64x512, 1e-7 rel)", 10.0):
        rng = np.random.default_rng(2024)
        for trial in range(50):
            m = int(rng.integers(1, 65))
            n = int(rng.integers(1, 513))
            if trial == 0:
                m, n = 64, 512
            a = rng.standard_normal((m, n)) * float(rng.uniform(0.1, 10.0))
            s = singular_values(a)
            gram = a @ a.T if m <= n else a.T @ a
            eig = np.linalg.eigvalsh(gram)
            oracle = np.sqrt(np.clip(eig, 0.0, None))[::-1]
            assert np.max(np.abs(s.values - oracle)) <= 1e-7 * oracle[0]


def test_aggregation_direct_formula_oracle():
    with criterion("aggregations vs direct-formula script (20 layer sets, 1e-10)", 1.0):
        rng = np.random.default_rng(7)
        for _ in range(20):
            d = int(rng.integers(1, 7))
            sq = rng.uniform(0.05, 1.5, size=d)
            er = rng.uniform(0.0, 3.5, size=d)
            fro = rng.uniform(0.1, 20.0, size=d)
            spec = rng.uniform(0.05, 8.0, size=d)
            layers = [
                metrics.LayerMetrics(layer_name=f"l{i}", sq=sq[i], er=er[i], fro=fro[i], spec=spec[i])
                for i in range(d)
            ]
            mm = metrics.aggregate_model(layers)
            er_f = np.maximum(er, 1e-12)
            assert abs(mm.q_sq_p - np.prod(sq) ** (1.0 / d)) <= 1e-10
            assert abs(mm.q_e_l2 - math.log(math.sqrt(np.sum(er_f**2) / d))) <= 1e-10
            assert abs(mm.q_f_p - math.log(math.sqrt(d * np.prod(fro**2) ** (1.0 / d)))) <= 1e-10
            assert abs(mm.q_s_p - math.log(math.sqrt(d * np.prod(spec**2) ** (1.0 / d)))) <= 1e-10


def test_evbmf_rank_recovery():
    with criterion("EVBMF rank recovery (r in {1,2,3} at >=20dB and noise-only, 95/100)", 30.0):
        rows, cols = 32, 64
        for rank in (1, 2, 3):
            hits = 0
            for seed in range(100):
                rng = np.random.default_rng([rank, seed])
                weights = np.array([1.0, 0.8, 0.6][:rank])
                energy = 100.0 * rows * cols * weights**2 / np.sum(weights**2)
                svals = np.sqrt(energy)
                u = np.linalg.qr(rng.standard_normal((rows, rank)))[0]
                v = np.linalg.qr(rng.standard_normal((cols, rank)))[0]
                a = (u * svals) @ v.T + rng.standard_normal((rows, cols))
                hits += evbmf(singular_values(a)).rank == rank
            assert hits >= 95, f"planted rank {rank}: {hits}/100"
        noise_hits = 0
        for seed in range(100):
            a = np.random.default_rng(seed).standard_normal((rows, cols))
            noise_hits += evbmf(singular_values(a)).rank == 0
        assert noise_hits >= 95, f"noise-only: {noise_hits}/100"


def test_spearman_properties():
    with criterion("spearman: tie case to 1e-9, monotone-transform invariance bit-exact", 1.0):
        expected = 4.5 / math.sqrt(4.5 * 5.0)
        assert abs(stats.spearman([1, 2, 2, 4], [10, 20, 30, 40]) - expected) <= 1e-9

        rng = np.random.default_rng(11)
        x = rng.standard_normal(60)
        y = rng.standard_normal(60)
        base = stats.spearman(x, y)
        for _ in range(100):
            a, b = rng.uniform(0.05, 4.0, size=2)
            c = rng.uniform(-5.0, 5.0)
            assert stats.spearman(x, a * y + b * y**3 + c) == base  # bit-exact


def test_planted_pipeline_oracle(tmp_path):
    with criterion("planted pipeline: 100-model synth family, rho exactly +/-1.0", 30.0):
        for link, expected in (("linear", "1.0"), ("neg-linear", "-1.0")):
            fam = tmp_path / f"fam-{link}"
            out = tmp_path / f"rep-{link}"
            assert main(["synth", "--n-models", "100", "--link", link, "--seed", "5",
                         "--out", str(fam)]) == 0
            assert main(["evaluate", "--manifest", str(fam / "manifest.jsonl"),
                         "--metrics", "E_L2", "--targets", "test_accuracy",
                         "--out", str(out)]) == 0
            lines = (out / "correlations.csv").read_text().strip().splitlines()
            assert lines[0] == "metric_id,target,rho,n"
            _, _, rho, n = lines[1].split(",")
            assert rho == expected, f"{link}: rho={rho}"
            assert int(n) == 100


def test_toy_grid_correlation_evolution(tmp_path):
    with criterion("toy grid 60x30: |rho(E_L2, acc)| grows, final >= 0.5, evolution SVG", 1800.0):
        grid_dir = tmp_path / "grid"
        rep_dir = tmp_path / "rep"
        manifest = families.grid_family(out_dir=grid_dir)
        assert len(store.read_manifest(manifest)) == 60 * 30
        assert main(["evaluate", "--manifest", str(manifest), "--group-by", "epoch",
                     "--out", str(rep_dir)]) == 0
        rows = [line.split(",") for line in (rep_dir / "correlations.csv").read_text().strip().splitlines()[1:]]
        rho = {
            int(epoch): float(r)
            for epoch, metric_id, target, r, _ in rows
            if metric_id == "E_L2" and target == "test_accuracy"
        }
        assert abs(rho[30]) > abs(rho[1]), f"|rho| did not grow: ep1 {rho[1]}, ep30 {rho[30]}"
        assert abs(rho[30]) >= 0.5, f"final |rho| {rho[30]}"
        evolution = rep_dir / "evolution_test_accuracy.svg"
        assert evolution.exists()
        assert evolution.read_text().count("<polyline") == 4  # one curve per metric


def test_toy_gradient_check():
    with criterion("toy analytic gradients vs central differences (step 1e-6, rel 1e-6)", 5.0):
        config = families.ToyTrainConfig(lr=0.05, weight_decay=1e-3, data_seed=6, init_seed=6)
        x, y = families.generate_blobs([config.data_seed, 0], 64)
        weights = families.init_toy_weights(config.hidden, config.init_seed)
        _, grads = families.toy_loss_and_grads(weights, x, y, config.weight_decay)
        rng = np.random.default_rng(99)
        step = 1e-6
        worst = 0.0
        for _ in range(100):
            name = rng.choice(["W1", "W2", "W3"])
            idx = tuple(rng.integers(0, s) for s in weights[name].shape)
            original = weights[name][idx]
            weights[name][idx] = original + step
            up, _ = families.toy_loss_and_grads(weights, x, y, config.weight_decay)
            weights[name][idx] = original - step
            down, _ = families.toy_loss_and_grads(weights, x, y, config.weight_decay)
            weights[name][idx] = original
            fd = (up - down) / (2 * step)
            an = grads[name][idx]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an)))
        assert worst <= 1e-6, f"max relative gradient error {worst}"


def test_format_fuzz(tmp_path):
    with criterion("format fuzz: 1000 mutated containers all raise typed errors", 10.0):
        base_path = tmp_path / "base.gprb"
        rng = np.random.default_rng(0xF0CC)
        store.write_container(
            [
                WeightTensor(name="conv.w", shape=(4, 3, 2, 2), data=rng.standard_normal(48)),
                WeightTensor(name="fc.w", shape=(5, 6), data=rng.standard_normal(30), dtype="f32"),
                WeightTensor(name="bias", shape=(5,), data=rng.standard_normal(5)),
            ],
            base_path,
        )
        base = base_path.read_bytes()
        index_len = int.from_bytes(base[8:16], "little")
        mutated_path = tmp_path / "mut.gprb"

        for trial in range(1000):
            blob = bytearray(base)
            kind = trial % 5
            if kind == 0:  # truncate anywhere
                blob = blob[: int(rng.integers(0, len(base)))]
            elif kind == 1:  # break the magic
                blob[int(rng.integers(0, 4))] ^= 0xFF
            elif kind == 2:  # corrupt index JSON with a NUL byte
                blob[int(rng.integers(16, 16 + index_len))] = 0x00
            elif kind == 3:  # lie about the index length
                blob[8:16] = int(rng.integers(0, 2**31)).to_bytes(8, "little")
            else:  # non-finite payload
                off = 16 + index_len
                blob[off : off + 8] = np.array([np.nan]).tobytes()
            mutated_path.write_bytes(bytes(blob))
            with pytest.raises(store.ContainerError):
                store.read_container(mutated_path)
