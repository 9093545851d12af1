import json
import subprocess
import sys

import pytest

from pgo_bailout.cli import main


def write_config(tmp_path, m=2, **kw):
    cfg = {"scenario": {"n": 5, "m": m, "seed": 2}, "training": {"epochs": 3},
           "n_random": 200, "n_zero_augmented": 200, "random_samples": 50}
    cfg.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_full_chain(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "o")
    assert main(["generate", "--config", cfg, "--out", out]) == 0
    sysfile = f"{out}/system.json"
    assert main(["clear", "--system", sysfile, "--config", cfg, "--out", out,
                 "--ctilde", "[0.1, 0, 0, 0, 0]"]) == 0
    head = (tmp_path / "o" / "clearing.csv").read_text().splitlines()[0]
    assert head == "quantity,index,value"
    assert main(["dataset", "--config", cfg, "--out", out]) == 0
    assert main(["train", "--config", cfg, "--dataset", f"{out}/dataset_saveall.csv",
                 "--out", out]) == 0
    assert main(["optimize", "--config", cfg, "--out", out, "--trajectory"]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert {"pgo_payall", "pgo_saveall", "random_search"} <= set(rep["methods"])
    assert (tmp_path / "o" / "trajectory.csv").exists()
    assert main(["sweep", "--config", cfg, "--out", out, "--fractions", "0.5", "1.0"]) == 0
    capsys.readouterr()
    assert main(["report", f"{out}/report.json"]) == 0
    assert capsys.readouterr().out.startswith("method,")


def test_lp_baseline(tmp_path):
    cfg = write_config(tmp_path, m=0)
    out = str(tmp_path / "o")
    assert main(["lp-baseline", "--config", cfg, "--out", out]) == 0
    text = (tmp_path / "o" / "lp.csv").read_text()
    assert "objective" in text and "Optimal" in text
    assert main(["generate", "--config", write_config(tmp_path, m=2), "--out", out]) == 0
    assert main(["lp-baseline", "--system", f"{out}/system.json", "--out", out]) == 2


def test_exit_codes(tmp_path):
    assert main(["optimize", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["optimize", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["optimize", "--config", str(bad)]) == 2
    with pytest.raises(SystemExit):
        main(["optimize", "--budget", "1", "--budget-frac", "0.5"])


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "pgo_bailout", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "lp-baseline" in r.stdout
