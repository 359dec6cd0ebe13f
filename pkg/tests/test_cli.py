import math
import re

import numpy as np
import pytest

from twophase.amf_detector import load_mask
from twophase.bench import ExperimentConfig, read_csv, rows_to_csv, run_repetitions, summarize
from twophase.cli import main
from twophase.image_core import GrayImage, load_pgm, save_pgm
from twophase.metrics import psnr
from twophase.restoration import StopCriteria


def smooth_pgm(path, n=48, seed=0):
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:n, 0:n]
    pix = np.clip(100 + 60 * np.sin(x / 7.0) * np.cos(y / 9.0) + rng.normal(0, 4, (n, n)), 1, 254)
    img = GrayImage(np.floor(pix))
    save_pgm(img, path)
    return img


@pytest.fixture
def clean_path(tmp_path):
    path = tmp_path / "clean.pgm"
    smooth_pgm(path)
    return path


def test_corrupt_zero_noise_byte_identical(tmp_path, clean_path):
    out = tmp_path / "out.pgm"
    assert main(["corrupt", str(clean_path), str(out), "--p", "0", "--q", "0"]) == 0
    assert out.read_bytes() == clean_path.read_bytes()
    assert load_mask(tmp_path / "out.mask.pbm").count == 0


def test_corrupt_deterministic(tmp_path, clean_path):
    a, b = tmp_path / "a.pgm", tmp_path / "b.pgm"
    for out in (a, b):
        assert main(["corrupt", str(clean_path), str(out), "--ratio", "0.4", "--seed", "17"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a.mask.pbm").read_bytes() == (tmp_path / "b.mask.pbm").read_bytes()


def test_corrupt_binomial_count(tmp_path):
    src = tmp_path / "flat.pgm"
    save_pgm(GrayImage(np.full((512, 512), 128.0)), src)
    out = tmp_path / "n.pgm"
    mask_path = tmp_path / "truth.pbm"
    assert main(["corrupt", str(src), str(out), "--p", "0.15", "--q", "0.15", "--seed", "3",
                 "--mask-out", str(mask_path)]) == 0
    n = 512 * 512
    count = load_mask(mask_path).count
    assert abs(count - 0.3 * n) <= 3 * math.sqrt(n * 0.3 * 0.7)
    assert (tmp_path / "truth.pbm.txt").read_text() == f"count={count}\n"


def test_corrupt_conflicting_flags(tmp_path, clean_path):
    assert main(["corrupt", str(clean_path), str(tmp_path / "x.pgm"), "--ratio", "0.2", "--p", "0.1"]) == 1


def test_restore_clean_image(tmp_path, clean_path, capsys):
    out = tmp_path / "r.pgm"
    assert main(["restore", str(clean_path), str(out)]) == 0
    assert out.read_bytes() == clean_path.read_bytes()
    assert "noisy=0" in capsys.readouterr().out


def test_restore_psnr_self_consistent(tmp_path, clean_path, capsys):
    noisy = tmp_path / "noisy.pgm"
    out = tmp_path / "restored.pgm"
    assert main(["corrupt", str(clean_path), str(noisy), "--ratio", "0.5", "--seed", "2"]) == 0
    capsys.readouterr()
    assert main(["restore", str(noisy), str(out), "--method", "relax", "--reference", str(clean_path)]) == 0
    line = capsys.readouterr().out.strip()
    fields = dict(kv.split("=") for kv in line.split())
    assert fields["method"] == "relax" and fields["stages"] == "13"
    printed = float(fields["psnr_quantized_db"])
    assert printed == pytest.approx(psnr(load_pgm(clean_path), load_pgm(out)), abs=1e-4)
    assert float(fields["psnr_db"]) > 25
    assert main(["psnr", str(clean_path), str(out)]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(printed, abs=1e-4)


def test_psnr_identical(clean_path, capsys):
    assert main(["psnr", str(clean_path), str(clean_path)]) == 0
    assert capsys.readouterr().out.strip() == "inf"


def test_detect_writes_outputs(tmp_path, clean_path, capsys):
    noisy = tmp_path / "noisy.pgm"
    main(["corrupt", str(clean_path), str(noisy), "--ratio", "0.3", "--seed", "9"])
    truth = load_mask(tmp_path / "noisy.mask.pbm")
    assert main(["detect", str(noisy), str(tmp_path / "amf.pgm"), "--w-max", "9"]) == 0
    found = load_mask(tmp_path / "amf.mask.pbm")
    assert np.all(found.flags[truth.flags])


def test_unknown_method_is_usage_error(tmp_path, clean_path):
    with pytest.raises(SystemExit) as exc:
        main(["restore", str(clean_path), str(tmp_path / "x.pgm"), "--method", "sor"])
    assert exc.value.code == 1


def test_exit_codes(tmp_path, clean_path):
    assert main(["psnr", str(tmp_path / "missing.pgm"), str(clean_path)]) == 2
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P6\n1 1\n255\n\0\0\0")
    assert main(["restore", str(bad), str(tmp_path / "x.pgm")]) == 2
    assert main(["restore", str(clean_path), str(tmp_path / "x.pgm"), "--w-max", "4"]) == 1
    assert main(["corrupt", str(clean_path), str(tmp_path / "x.pgm"), "--ratio", "1.5"]) == 1
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1


def test_bench_cardinality_and_means(tmp_path, clean_path):
    cfg = ExperimentConfig([str(clean_path)], ratios=(0.5,), methods=("relax", "cg_pr"), repetitions=2,
                           seed_base=4, stop=StopCriteria(ite_max=50), timing=False)
    records = run_repetitions(cfg)
    rows = summarize(records)
    assert len(rows) == 2 and [r["method"] for r in rows] == ["relax", "cg_pr"]
    for row in rows:
        per_rep = [r.psnr_db for r in records if r.method == row["method"]]
        assert len(per_rep) == 2
        assert abs(row["mean_psnr_db"] - float(np.mean(per_rep))) <= 1e-12
        assert row["status"] == "ok" and row["mean_time_s"] == 0.0


def test_bench_csv_deterministic(tmp_path, clean_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"b{k}.csv"
        assert main(["bench", str(clean_path), "--ratio", "0.3", "--method", "relax", "--method", "newton_minres",
                     "--reps", "2", "--seed", "7", "--ite-max", "30", "--no-timing", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    text = outs[0].decode()
    assert text.splitlines()[0] == "image,ratio,method,mean_time_s,mean_psnr_db,mean_iters,stop_reason_mode,status"
    rows = read_csv(tmp_path / "b0.csv")
    assert len(rows) == 2 and all(r["mean_time_s"] == "0.0" for r in rows)
    assert re.fullmatch(r"[0-9.]+", rows[0]["mean_psnr_db"])


def test_bench_parallel_matches_serial(tmp_path, clean_path):
    base = dict(images=[str(clean_path)], ratios=(0.3, 0.6), methods=("relax",), repetitions=1,
                timing=False, stop=StopCriteria(ite_max=40))
    serial = rows_to_csv(summarize(run_repetitions(ExperimentConfig(**base))))
    parallel = rows_to_csv(summarize(run_repetitions(ExperimentConfig(**base, workers=2))))
    assert serial == parallel


def test_bench_config_validation(clean_path):
    with pytest.raises(ValueError):
        ExperimentConfig([str(clean_path)], ratios=(1.0,))
    with pytest.raises(ValueError):
        ExperimentConfig([str(clean_path)], repetitions=0)
    with pytest.raises(ValueError):
        ExperimentConfig([str(clean_path)], methods=("sor",))
    with pytest.raises(ValueError):
        ExperimentConfig([])


def test_bench_cell_error_recorded(tmp_path, clean_path, monkeypatch):
    import twophase.bench as bench

    def boom(*args, **kwargs):
        raise FloatingPointError("synthetic")

    monkeypatch.setattr(bench, "restore", boom)
    rows = summarize(run_repetitions(ExperimentConfig([str(clean_path)], ratios=(0.3,), methods=("relax",),
                                                      repetitions=1)))
    assert len(rows) == 1 and rows[0]["status"].startswith("error: FloatingPointError")
