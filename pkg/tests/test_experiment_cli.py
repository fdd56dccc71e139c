import json
import math
import random
import xml.etree.ElementTree as ET
from dataclasses import replace

import pytest

from schrolab import __version__
from schrolab.experiment_cli import (
    RECORD_COLUMNS,
    ExperimentRecord,
    SweepConfig,
    emit_report,
    fit_growth,
    load_config,
    main,
    read_records_csv,
    run_one,
    run_sweep,
    thread_count,
)
from schrolab.omega_builder import omega_measure, omega_star_lower_bound, sample_eval_points
from schrolab.propagator import propagate
from schrolab.wave_packet import l2_norm_closed, make_bump, packet_params, params_from_dict


def synthetic(Rs, power=0.3):
    out = []
    for i, R in enumerate(Rs):
        l2 = 1.0 + 0.1 * i
        out.append(ExperimentRecord(2, R, 0.5, 2 / 3, 1 / 6, R ** (1 / 6), R ** (2 / 3), R**0.5, 1e-9, 1.0, l2 * R**power, l2, 1.0, 1.0, i, 0.0))
    return out


# -- config ------------------------------------------------------------------


def test_config_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown config keys"):
        SweepConfig.from_dict({"n": 2, "Rvalues": [1e12]})
    with pytest.raises(ValueError):
        SweepConfig.from_dict({"constants": {"zz": 1.0}})
    with pytest.raises(ValueError):
        SweepConfig.from_dict({"n": 1})
    with pytest.raises(ValueError):
        SweepConfig.from_dict({"offset_mode": "edge"})
    with pytest.raises(ValueError):
        SweepConfig.from_dict({"quadrature": {"order": 3}})


def test_config_defaults_and_s():
    cfg = SweepConfig.from_dict({})
    assert cfg.exponent_s == pytest.approx(1 / 3 - 0.05)
    assert SweepConfig.from_dict({"s": 0.28}).exponent_s == 0.28


def test_load_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n": 2, "R_values": [1e12], "points_per_R": 2}))
    assert load_config(path).points_per_R == 2


def test_thread_count(monkeypatch):
    monkeypatch.setenv("SCHROLAB_THREADS", "3")
    assert thread_count() == 3
    assert thread_count(5) == 5
    monkeypatch.setenv("SCHROLAB_THREADS", "x")
    assert thread_count() == 1


# -- fits --------------------------------------------------------------------


def test_fit_exact_power_law():
    fit = fit_growth(synthetic([1e10, 1e11, 1e12, 1e13]))
    assert fit.slope == pytest.approx(0.3, abs=1e-12)
    assert fit.stderr < 1e-12


def test_fit_order_invariant():
    recs = synthetic([2e10, 2e11, 2e12, 2e13], power=0.31)
    recs = [replace(r, l1_lower=r.l1_lower * (1 + 0.05 * (-1) ** i)) for i, r in enumerate(recs)]
    base = fit_growth(recs)
    shuffled = recs[:]
    random.Random(0).shuffle(shuffled)
    assert fit_growth(shuffled) == base
    assert base.stderr > 0


def test_fit_needs_three_distinct_R():
    with pytest.raises(ValueError):
        fit_growth(synthetic([1e10, 1e11]))
    with pytest.raises(ValueError):
        fit_growth(synthetic([1e10, 1e10, 1e11]))


# -- reports -----------------------------------------------------------------


def test_csv_one_record(tmp_path):
    path = emit_report(synthetic([1e12]), "csv", tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and lines[0].split(",") == RECORD_COLUMNS


def test_csv_roundtrip_bit_exact(tmp_path):
    recs = synthetic([2e10 * 1.1, 3.7e11, math.pi * 1e12])
    recs = [replace(r, ratio=1 / 3 * (i + 1), wall_time=0.1 * i) for i, r in enumerate(recs)]
    emit_report(recs, "csv", tmp_path / "r.csv")
    assert read_records_csv(tmp_path / "r.csv") == recs


def test_json_and_svg(tmp_path):
    recs = synthetic([1e10, 1e11, 1e12, 1e13])
    emit_report(recs, "json", tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert [d["R"] for d in data] == [r.R for r in recs]
    emit_report(recs, "svg", tmp_path / "r.svg")
    root = ET.parse(tmp_path / "r.svg").getroot()
    texts = [el.text for el in root.iter() if el.tag.endswith("text")]
    assert any("slope" in (t or "") and "0.3000" in t for t in texts)
    with pytest.raises(ValueError):
        emit_report([], "svg", tmp_path / "e.svg")
    with pytest.raises(ValueError):
        emit_report(recs, "png", tmp_path / "r.png")
    with pytest.raises(OSError):
        emit_report(recs, "csv", tmp_path / "missing" / "dir" / "r.csv")


# -- sweeps ------------------------------------------------------------------


def test_single_point_micro_oracle():
    cfg = SweepConfig.from_dict({"n": 2, "R_values": [1e12], "points_per_R": 1, "seed": 5})
    rec = run_one(cfg, 1e12, 0)
    bump = make_bump()
    p = packet_params(2, 1e12, bump=bump)
    omega = omega_measure(p).value
    pt = sample_eval_points(p, 1, rec.seed)[0]
    amp = abs(propagate(pt, p, bump).amplitude)
    measure = omega_star_lower_bound(p, omega)
    l2 = l2_norm_closed(p, bump)
    assert rec.omega_star_measure == measure
    assert rec.mean_amplitude == amp
    assert rec.l1_lower == measure * amp
    assert rec.l2_norm == l2
    assert rec.ratio == pytest.approx(measure * amp / (1e12 ** (1 / 3 - 0.05) * l2), rel=1e-15)
    assert rec.ratio > 0 and rec.l1_lower <= rec.mean_amplitude
    assert (rec.Q, rec.L, rec.S1) == (p.Q, p.L, p.S1)
    assert rec.pass_rate == 1.0 and rec.wall_time == 0.0


def test_sweep_skips_and_logs_infeasible_R():
    cfg = SweepConfig.from_dict({"n": 2, "R_values": [1e3, 1e12], "points_per_R": 2})
    log = []
    recs = run_sweep(cfg, log)
    assert [r.R for r in recs] == [1e12]
    assert any("R=1000 skipped" in line and "Q >= 1/(4 mu0)" in line for line in log)


def test_sweep_empty():
    assert run_sweep(SweepConfig.from_dict({"R_values": []})) == []


def test_record_params_revalidate():
    cfg = SweepConfig.from_dict({"R_values": [2e11], "points_per_R": 1})
    rec = run_sweep(cfg)[0]
    p = params_from_dict({"n": rec.n, "R": rec.R, "sigma": rec.sigma, "Q": rec.Q, "L": rec.L, "S1": rec.S1})
    assert p.violations == []


# -- command line ------------------------------------------------------------


def test_cli_subcommands(tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["solve-exponents", "--n", "3", "--out", str(out / "se")]) == 0
    ex = json.loads((out / "se" / "exponents.json").read_text())
    assert (ex["lambda"], ex["kappa"], ex["s_star"]) == ("5/8", "1/4", "3/8")
    assert main(["gauss", "--qmax", "24", "--rows", "--out", str(out / "g")]) == 0
    assert (out / "g" / "gauss.csv").read_text().splitlines()[0] == "a,b,q,re,im,magnitude,case_tag"
    assert main(["weyl", "--trials", "20", "--seed", "1", "--out", str(out / "w")]) == 0
    assert main(["dirichlet", "--m", "2", "--Q", "16", "--points", "300", "--out", str(out / "d")]) == 0
    assert main(["omega", "--n", "2", "--Q", "100", "--exact", "--out", str(out / "o")]) == 0
    assert main(["propagate", "--n", "2", "--R", "1e12", "--points", "3", "--out", str(out / "p")]) == 0
    man = json.loads((out / "p" / "manifest.json").read_text())
    assert man["version"] == __version__ and man["seeds"] == {"seed": 0}
    assert main(["omega", "--n", "2", "--Q", "3", "--out", str(out / "bad")]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_sweep_deterministic(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 2, "R_values": [2e11, 2e12, 2e13], "points_per_R": 4, "seed": 2}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(b), "--threads", "2"]) == 0
    assert (a / "records.csv").read_bytes() == (b / "records.csv").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["config"]["seed"] == 2 and len(man["seeds"]["per_R"]) == 3 and "fit" in man
    ET.parse(a / "ratio.svg")


def test_cli_sweep_empty(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"R_values": []}))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "e")]) == 0
    assert (tmp_path / "e" / "records.csv").read_text().count("\n") == 1


def test_cli_sweep_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"R_values": [1e12], "extra": 1}))
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
