"""Command-line surface: exit codes, reports, and file outputs."""
import json

import pytest

from mschemes.cli import main

GL = '{"kind":"gl"}'


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_gen_orbit_and_validate_roundtrip(tmp_path, capsys):
    scheme_file = tmp_path / "scheme.json"
    code, out, _ = run(capsys, [
        "gen-orbit", "--ell", "2", "--dim", "3", "--group", GL,
        "--seed-set", "1", "--m", "2", "--out", str(scheme_file)])
    assert code == 0
    obj = json.loads(out)
    assert obj["carrier"] == 7 and obj["m"] == 2
    code, out, _ = run(capsys, ["validate", "--in", str(scheme_file)])
    assert code == 0 and json.loads(out)["ok"]


def test_gen_orbit_lazy_export_rejected(tmp_path, capsys):
    code, _, err = run(capsys, [
        "gen-orbit", "--ell", "2", "--dim", "3", "--group", GL,
        "--seed-set", "1", "--m", "2", "--lazy",
        "--out", str(tmp_path / "x.json")])
    assert code == 2 and "lazy" in err


def test_bad_input_exit_codes(capsys):
    # non-prime ell
    code, _, err = run(capsys, [
        "addcomb", "--ell", "4", "--dim", "2", "--set", "1,2"])
    assert code == 2
    # missing scheme source
    code, _, err = run(capsys, ["validate"])
    assert code == 2 and "input error" in err


def test_cap_exit_code(capsys):
    code, _, err = run(capsys, [
        "validate", "--ell", "2", "--dim", "3", "--group", GL,
        "--seed-set", "1", "--m", "3", "--cap", "100"])
    assert code == 3 and "cap exceeded" in err


def test_antisym_witness_report(capsys):
    code, out, _ = run(capsys, [
        "antisym", "--ell", "2", "--dim", "3", "--group",
        '{"kind":"singer"}', "--seed-set", "1", "--m", "3"])
    assert code == 0
    obj = json.loads(out)
    assert obj["status"] == "witness"
    assert obj["replay_ok"] and obj["word_length"] >= 1


def test_depth_rejects_witness_scheme(capsys):
    code, _, err = run(capsys, [
        "depth", "--ell", "2", "--dim", "3", "--group", GL,
        "--seed-set", "1", "--m", "2"])
    assert code == 2 and "antisymmetric" in err


def test_fiber_command(capsys):
    code, out, _ = run(capsys, [
        "fiber", "--ell", "2", "--dim", "3", "--group", GL,
        "--seed-set", "1", "--m", "3", "--fix", "1"])
    assert code == 0
    obj = json.loads(out)
    assert obj["prefix"] == [1] and obj["m"] == 2


def test_addcomb_report(capsys):
    code, out, _ = run(capsys, [
        "addcomb", "--ell", "2", "--dim", "3", "--set", "1,2,3"])
    assert code == 0
    obj = json.loads(out)
    assert obj["energy"] == obj["energy_oracle"] and obj["energy_match"]
    assert obj["covering_ok"] and obj["freiman_ruzsa_ok"] and obj["plunnecke_ok"]


def test_fourier_csv_output(tmp_path, capsys):
    csv_file = tmp_path / "coeffs.csv"
    code, out, _ = run(capsys, [
        "fourier", "--ell", "2", "--dim", "2", "--set", "1,2,3",
        "--eps-prime", "1/8", "--out", str(csv_file)])
    assert code == 0
    obj = json.loads(out)
    assert float(obj["parseval_error"]) <= 1e-9
    lines = csv_file.read_text().strip().split("\n")
    assert lines[0] == "dual_vector,re,im,abs" and len(lines) == 5


def test_shrink_gate_unmet_is_input_error(capsys):
    code, _, err = run(capsys, [
        "shrink", "--ell", "2", "--dim", "3", "--group", GL,
        "--seed-set", "1", "--m", "4", "--K", "4", "--k", "1"])
    assert code == 2


def test_report_file_is_canonical(tmp_path, capsys):
    r1, r2 = tmp_path / "a.json", tmp_path / "b.json"
    argv = ["addcomb", "--ell", "2", "--dim", "4", "--set", "1,2,4,8"]
    assert main(argv + ["--report", str(r1)]) == 0
    assert main(argv + ["--report", str(r2)]) == 0
    capsys.readouterr()
    assert r1.read_bytes() == r2.read_bytes()
    # canonical JSON: no spaces after separators, sorted keys
    text = r1.read_text()
    obj = json.loads(text)
    assert text == json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"
