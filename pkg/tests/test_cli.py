import json

import numpy as np
import pytest

from ovfit.cli import main
from ovfit.io import read_dataset, read_model


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def greybox(tmp_path, capsys):
    path = tmp_path / "g.csv"
    code, _, _ = run(["generate", "--experiment", "greybox", "--points", 300, "--fmin", 1,
                      "--fmax", 1e4, "--seed", 7, "--out", path], capsys)
    assert code == 0
    return path


def test_generate_greybox(greybox):
    lines = greybox.read_text().strip().splitlines()
    assert len(lines) == 301
    assert lines[0] == "freq_rad_s,re_y1u1,im_y1u1"
    true = read_model(greybox.with_name("g.model.json"))
    assert true.order == 5


def test_generate_modal_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert run(["generate", "--experiment", "modal", "--modes", 10, "--points", 700,
                    "--seed", 3, "--out", p], capsys)[0] == 0
    assert len(a.read_text().strip().splitlines()) == 701
    assert a.read_bytes() == b.read_bytes()
    assert a.with_name("a.model.json").read_bytes() == b.with_name("b.model.json").read_bytes()


def test_generate_noise_free(tmp_path, capsys):
    p = tmp_path / "c.json"
    assert run(["generate", "--experiment", "greybox", "--snr-db", "inf", "--points", 20,
                "--out", p], capsys)[0] == 0
    d = read_dataset(p)
    true = read_model(tmp_path / "c.model.json")
    from ovfit.core import eval_model
    np.testing.assert_allclose(d.responses, eval_model(true, d.s), rtol=1e-14)


def test_fit_greybox(greybox, tmp_path, capsys):
    out, bode = tmp_path / "m.json", tmp_path / "b.csv"
    code, stdout, _ = run(["fit", greybox, "--num-order", 5, "--den-order", 5,
                           "--fix-num", "3=0", "--fix-num", "4=0", "--fix-num", "5=0",
                           "--fix-den", "0=0", "--out", out, "--bode-out", bode], capsys)
    assert code == 0
    assert "fit:" in stdout and "worst condition" in stdout and "iterations" in stdout
    doc = json.loads(out.read_text())
    assert doc["numerator"][0][0][3:] == [0.0, 0.0, 0.0]
    assert doc["denominator"][0] == 0.0
    assert doc["tool"]["name"] == "ovfit"
    assert len(doc["constraints"]["fixed"]) == 4
    assert doc["metrics"]["nrmse_fit_percent"] > 80
    assert "timestamp" not in out.read_text()
    assert len(bode.read_text().strip().splitlines()) == 301


def test_fit_is_deterministic(greybox, tmp_path, capsys):
    files = [tmp_path / "x.json", tmp_path / "y.json"]
    for f in files:
        assert run(["fit", greybox, "--den-order", 5, "--num-order", 2, "--out", f], capsys)[0] == 0
    assert files[0].read_bytes() == files[1].read_bytes()


def test_fit_constant_data_order_zero(tmp_path, capsys):
    p = tmp_path / "c.csv"
    p.write_text("freq_rad_s,re_y1u1,im_y1u1\n" + "".join(f"{w},3.5,0.0\n" for w in range(1, 11)))
    out = tmp_path / "m.json"
    assert run(["fit", p, "--den-order", 0, "--out", out], capsys)[0] == 0
    doc = json.loads(out.read_text())
    assert doc["denominator"] == [1.0]
    assert doc["numerator"][0][0][0] == pytest.approx(3.5)


def test_fit_with_weights_and_diagnostics(greybox, tmp_path, capsys):
    wf = tmp_path / "w.txt"
    wf.write_text("\n".join(["1.0"] * 300))
    code, stdout, _ = run(["fit", greybox, "--den-order", 3, "--weight-file", wf, "--no-iv",
                           "--diagnostics"], capsys)
    assert code == 0
    assert "iv=0" in stdout and "cost" in stdout


def test_exit_codes(greybox, tmp_path, capsys):
    code, _, err = run(["fit", tmp_path / "missing.csv", "--den-order", 2], capsys)
    assert code == 1 and "missing.csv" in err
    assert run(["fit", greybox, "--den-order", "x"], capsys)[0] == 1
    assert run(["fit", greybox], capsys)[0] == 1
    assert run(["fit", greybox, "--den-order", 2, "--fix-num", "junk"], capsys)[0] == 1
    assert run(["fit", greybox, "--den-order", 2, "--bound-den", "1=3,1"], capsys)[0] == 1
    assert run(["fit", greybox, "--den-order", 2, "--fix-num", "y2u1:0=1"], capsys)[0] == 1
    assert run(["generate", "--experiment", "nope", "--out", tmp_path / "z.csv"], capsys)[0] == 1
    assert run(["generate", "--experiment", "modal", "--fmin", 10, "--fmax", 1,
                "--out", tmp_path / "z.csv"], capsys)[0] == 1
    assert run(["bench-conditioning", "--basis", "nope"], capsys)[0] == 1
    code, _, err = run(["fit", greybox, "--den-order", 400], capsys)
    assert code == 2 and "setup" in err
    code, _, err = run(["fit", greybox, "--den-order", 3, "--fix-den", "7=1"], capsys)
    assert code == 3
    code, _, _ = run(["fit", greybox, "--den-order", 3, "--fix-den", "1=1", "--fix-den", "1=2"], capsys)
    assert code == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("freq_rad_s,re_y1u1,im_y1u1\n1,a,b\n")
    code, _, err = run(["fit", bad, "--den-order", 1], capsys)
    assert code == 1 and "bad.csv" in err


def test_channel_prefix_targets_one_channel(tmp_path, capsys):
    w = np.logspace(0, 2, 40)
    s = 1j * w
    h11, h12 = 1 / (s + 1) / (s + 10), (s + 3) / (s + 1) / (s + 10)
    rows = ["freq_rad_s,re_y1u1,im_y1u1,re_y1u2,im_y1u2"]
    rows += [",".join(repr(float(x)) for x in (a, b.real, b.imag, c.real, c.imag))
             for a, b, c in zip(w, h11, h12)]
    p = tmp_path / "mimo.csv"
    p.write_text("\n".join(rows) + "\n")
    out = tmp_path / "m.json"
    assert run(["fit", p, "--den-order", 2, "--num-order", 1, "--fix-num", "y1u1:1=0",
                "--out", out], capsys)[0] == 0
    num = json.loads(out.read_text())["numerator"][0]
    assert num[0][1] == 0.0
    assert num[1][1] == pytest.approx(1.0, rel=1e-6)


def test_bench_conditioning(capsys):
    code, out, _ = run(["bench-conditioning", "--basis", "barycentric", "--column-scaling", "off",
                        "--json"], capsys)
    assert code == 0
    rows = json.loads(out)
    assert {r["domain"] for r in rows} == {"s", "q"}
    code, out, _ = run(["bench-conditioning", "--basis", "monomial", "--domain", "q"], capsys)
    assert code == 0 and "monomial" in out


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
