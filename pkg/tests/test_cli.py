import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from chromclust.cli import EXIT_ERROR, EXIT_NON_ASSESSABLE, EXIT_NOT_CONVERGED, EXIT_OK, main
from chromclust.column import ColumnConfig, read_chromatogram
from chromclust.sampler import ChainStore

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


def _yaml(path, data):
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path


def _run_cfg(tmp_path, name, **sampler):
    raw = yaml.safe_load((CONFIGS / name).read_text())
    raw["sampler"].update(sampler)
    return _yaml(tmp_path / name, raw)


# ---------------------------------------------------------------- simulate

def test_simulate_bypass(tmp_path):
    assert main(["simulate", "--config", str(CONFIGS / "bypass.yaml"), "--out", str(tmp_path), "--plot"]) == EXIT_OK
    ch = read_chromatogram(tmp_path / "chromatogram.csv")
    direct = ColumnConfig.load(CONFIGS / "bypass.yaml").simulate()
    np.testing.assert_allclose(ch.values, direct.values, rtol=1e-9, atol=1e-15)
    assert (tmp_path / "chromatogram.png").stat().st_size > 0


def test_simulate_matches_golden(tmp_path):
    raw = yaml.safe_load((CONFIGS / "column.yaml").read_text())
    raw["discretization"].update(n_axial=10, n_radial=2, dpfr_cells=10)
    cfg = _yaml(tmp_path / "column.yaml", raw)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    golden = read_chromatogram(ROOT / "tests/data/golden_chromatogram.csv")
    got = read_chromatogram(tmp_path / "chromatogram.csv")
    np.testing.assert_allclose(got.values, golden.values, rtol=1e-8, atol=1e-12)


def test_simulate_invalid_porosity(tmp_path, capsys):
    raw = yaml.safe_load((CONFIGS / "column.yaml").read_text())
    col = next(u for u in raw["units"] if u.get("name") == "column")
    col["col_porosity"] = 1.5
    cfg = _yaml(tmp_path / "bad.yaml", raw)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_ERROR
    assert "col_porosity" in capsys.readouterr().err


# -------------------------------------------------------------- synthesize

def _bypass_long(tmp_path):
    raw = yaml.safe_load((CONFIGS / "bypass.yaml").read_text())
    raw["times"]["num"] = 2001
    return _yaml(tmp_path / "bypass.yaml", raw)


@pytest.mark.parametrize("sigma2", ["0", "-1e-6"])
def test_synthesize_rejects_nonpositive_variance(tmp_path, sigma2, capsys):
    cfg = _bypass_long(tmp_path)
    assert main(["synthesize", "--config", str(cfg), "--out", str(tmp_path), f"--sigma2={sigma2}"]) == EXIT_ERROR
    assert "sigma2" in capsys.readouterr().err


def test_synthesize_noise_free_equals_simulation(tmp_path):
    cfg = _bypass_long(tmp_path)
    assert main(["synthesize", "--config", str(cfg), "--out", str(tmp_path), "--sigma2", "0",
                 "--noise-free"]) == EXIT_OK
    data = read_chromatogram(tmp_path / "data.csv")
    clean = ColumnConfig.load(cfg).simulate()
    assert np.array_equal(data.values, clean.values)


def test_synthesize_residual_variance(tmp_path):
    cfg = _bypass_long(tmp_path)
    s2 = 1e-4
    assert main(["synthesize", "--config", str(cfg), "--out", str(tmp_path), "--sigma2", str(s2), "--seed", "5"]) == 0
    resid = read_chromatogram(tmp_path / "data.csv").values - ColumnConfig.load(cfg).simulate().values
    assert resid.size >= 1000
    assert np.mean(resid ** 2) == pytest.approx(s2, rel=0.05)


def test_synthesize_same_seed_identical(tmp_path):
    cfg = _bypass_long(tmp_path)
    for d in ("a", "b"):
        main(["synthesize", "--config", str(cfg), "--out", str(tmp_path / d), "--sigma2", "1e-5", "--seed", "3"])
    assert (tmp_path / "a/data.csv").read_bytes() == (tmp_path / "b/data.csv").read_bytes()
    main(["synthesize", "--config", str(cfg), "--out", str(tmp_path / "c"), "--sigma2", "1e-5", "--seed", "4"])
    assert (tmp_path / "a/data.csv").read_bytes() != (tmp_path / "c/data.csv").read_bytes()


# ------------------------------------------------------------------ sample

def test_sample_cap_rows(tmp_path):
    cfg = _run_cfg(tmp_path, "unimodal.yaml", n_iter=10, poll_interval=None)
    code = main(["sample", "--config", str(cfg), "--out", str(tmp_path / "run"), "--offline"])
    assert code in (EXIT_OK, EXIT_NOT_CONVERGED, EXIT_NON_ASSESSABLE)
    store = ChainStore.read(tmp_path / "run")
    assert list(store.lengths()) == [10] * 4
    for lab in store.labels:
        lines = (tmp_path / "run" / f"chain_{lab}.csv").read_text().strip().splitlines()
        assert len(lines) == 11


def test_sample_online_stops_early_and_offline_agrees(tmp_path):
    cfg = _run_cfg(tmp_path, "unimodal.yaml")
    run = tmp_path / "run"
    assert main(["sample", "--config", str(cfg), "--out", str(run), "--online"]) == EXIT_OK
    lengths = ChainStore.read(run).lengths()
    assert lengths.max() < 50_000 and lengths.max() % 1000 == 0
    online = (run / "diagnostics/report.txt").read_text()
    assert main(["diagnose", str(run), "--config", str(cfg), "--out", str(tmp_path / "off")]) == EXIT_OK
    assert (tmp_path / "off/diagnostics/report.txt").read_text() == online


def test_sample_resume_continues_exactly(tmp_path):
    run = tmp_path / "run"
    short = _run_cfg(tmp_path, "unimodal.yaml", n_iter=300, poll_interval=None, adapt_until=150)
    main(["sample", "--config", str(short), "--out", str(run), "--offline"])
    first = ChainStore.read(run)
    longer = _run_cfg(tmp_path, "unimodal.yaml", n_iter=700, poll_interval=None, adapt_until=150)
    main(["sample", "--config", str(longer), "--out", str(run), "--offline", "--resume"])
    resumed = ChainStore.read(run)
    assert list(resumed.lengths()) == [700] * 4
    for i in range(4):
        assert np.array_equal(resumed.samples(i)[:300], first.samples(i))

    # same adaptation window, so the resumed run equals an uninterrupted one
    fresh = tmp_path / "fresh"
    main(["sample", "--config", str(longer), "--out", str(fresh), "--offline"])
    for lab in resumed.labels:
        assert (run / f"chain_{lab}.csv").read_bytes() == (fresh / f"chain_{lab}.csv").read_bytes()


def test_sample_resume_without_manifest(tmp_path, capsys):
    cfg = _run_cfg(tmp_path, "unimodal.yaml", n_iter=10)
    assert main(["sample", "--config", str(cfg), "--out", str(tmp_path / "none"), "--resume"]) == EXIT_ERROR


def test_sample_byte_identical(tmp_path):
    cfg = _run_cfg(tmp_path, "unimodal.yaml", n_iter=2000, poll_interval=None)
    for d in ("a", "b"):
        main(["sample", "--config", str(cfg), "--out", str(tmp_path / d), "--offline", "--seed", "9"])
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert any(f.name == "report.txt" for f in files)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


# ---------------------------------------------------------------- diagnose

@pytest.fixture(scope="module")
def trimodal_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("tri")
    cfg = _run_cfg(tmp, "trimodal.yaml", n_iter=20_000)
    code = main(["sample", "--config", str(cfg), "--out", str(tmp / "run"), "--offline"])
    return cfg, tmp / "run", code


def test_diagnose_trimodal(trimodal_run, tmp_path):
    cfg, run, code = trimodal_run
    assert code == EXIT_OK
    assert main(["report", str(run), "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    out = tmp_path / "diagnostics"
    text = (out / "report.txt").read_text()
    assert "K = 3" in text
    rows = [line.split(",") for line in (out / "clusters.csv").read_text().splitlines()[1:]]
    groups = {}
    for chain, idx, *_ in rows:
        groups.setdefault(idx, []).append(chain)
    assert sorted(groups.values()) == [["e", "r", "x"], ["k", "u"], ["w"]]
    k_curve = np.loadtxt(out / "k_distortion.csv", delimiter=",", skiprows=1)
    assert list(k_curve[:, 0]) == [1, 2, 3, 4, 5, 6]
    linkage = np.loadtxt(out / "linkage.csv", delimiter=",", skiprows=1)
    assert linkage.shape == (5, 5)
    for name in ("traces.png", "elbow.png", "dendrogram.png", "densities.png"):
        assert (out / name).stat().st_size > 0


def test_diagnose_unimodal_no_clustering(tmp_path):
    cfg = _run_cfg(tmp_path, "unimodal.yaml", n_iter=5000, poll_interval=None)
    main(["sample", "--config", str(cfg), "--out", str(tmp_path / "run"), "--offline"])
    assert main(["diagnose", str(tmp_path / "run")]) == EXIT_OK
    text = (tmp_path / "run/diagnostics/report.txt").read_text()
    assert "converged" in text and "K = 1" in text


def test_diagnose_single_dump(trimodal_run, capsys):
    _, run, _ = trimodal_run
    assert main(["diagnose", str(run / "chain_e.csv")]) == EXIT_ERROR
    assert "chain" in capsys.readouterr().err


def test_diagnose_schema_mismatch(trimodal_run, tmp_path, capsys):
    _, run, _ = trimodal_run
    text = (run / "chain_r.csv").read_text().splitlines()
    text[0] = text[0].replace("x1", "renamed")
    (tmp_path / "chain_r.csv").write_text("\n".join(text) + "\n")
    code = main(["diagnose", str(run / "chain_e.csv"), str(tmp_path / "chain_r.csv")])
    assert code == EXIT_ERROR
    assert "parameter columns" in capsys.readouterr().err


def test_manifest_records_run(trimodal_run):
    _, run, _ = trimodal_run
    man = json.loads((run / "manifest.json").read_text())
    assert [c["label"] for c in man["chains"]] == list("erxkuw")
    assert all(c["length"] == 20_000 for c in man["chains"])
