from __future__ import annotations

import json

import numpy as np
import pytest

from nci import cli
from nci.io_formats import read_fseq


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    code = str(d / "code.csv")
    video = str(d / "clip.fseq")
    assert cli.main(["gen-code", "-o", code, "--frames", "1536", "--num-codes", "2", "--seed", "3"]) == 0
    assert cli.main(["render", "--code", code, "-o", video, "--size", "32,32", "--t0", "100",
                     "--frames", "450", "--seed", "3"]) == 0
    return d, code, video


def test_gen_code_writes_manifest(workspace):
    d, code, _ = workspace
    manifest = json.loads(open(code + ".manifest.json").read())
    assert manifest["command"] == "gen-code"
    assert manifest["exit_code"] == 0
    assert manifest["seed"] == 3
    assert code in manifest["outputs"]
    for key in ("argv", "parameters", "environment", "inputs", "tool_version"):
        assert key in manifest


def test_align_recovers_offset(workspace, capsys):
    _, code, video = workspace
    assert cli.main(["align", video, "--code", code, "--search", "0:1000", "--manifest", "/dev/null"]) == 0
    out = capsys.readouterr().out
    assert "offset=100" in out


def test_align_inconclusive_exit_code(workspace):
    _, code, video = workspace
    assert cli.main(["align", video, "--code", code, "--search", "0:1000", "--threshold", "50",
                     "--manifest", "/dev/null"]) == 2


def test_missing_file_is_error(workspace, tmp_path):
    _, code, _ = workspace
    assert cli.main(["align", str(tmp_path / "nope.fseq"), "--code", code]) == 1


def test_missing_required_argument_is_error(capsys):
    assert cli.main(["render", "-o", "x.fseq"]) == 1
    assert "--code" in capsys.readouterr().err


def test_invalid_threads_named(workspace, capsys):
    _, code, video = workspace
    assert cli.main(["align", video, "--code", code, "--threads", "0"]) == 1
    assert "--threads" in capsys.readouterr().err


def test_tamper_requires_op_flags(workspace, tmp_path, capsys):
    _, _, video = workspace
    assert cli.main(["tamper", "cut", video, "-o", str(tmp_path / "o.fseq")]) == 1
    assert "--at" in capsys.readouterr().err
    assert cli.main(["tamper", "composite", video, "-o", str(tmp_path / "o.fseq"), "--rect", "1,2,3,4"]) == 1
    assert "--value" in capsys.readouterr().err


def test_environment_default_and_flag_precedence(workspace, monkeypatch):
    _, code, video = workspace
    monkeypatch.setenv("NCI_THRESHOLD", "50")
    assert cli.main(["align", video, "--code", code, "--search", "0:1000", "--manifest", "/dev/null"]) == 2
    assert cli.main(["align", video, "--code", code, "--search", "0:1000", "--threshold", "1.5",
                     "--manifest", "/dev/null"]) == 0


def test_tamper_cut_and_log_replay(workspace, tmp_path):
    _, _, video = workspace
    cut = str(tmp_path / "cut.fseq")
    log = str(tmp_path / "cut.log")
    assert cli.main(["tamper", "cut", video, "-o", cut, "--at", "200", "--remove", "30", "--log", log]) == 0
    with open(cut, "rb") as fh:
        assert read_fseq(fh).num_frames == 420
    again = str(tmp_path / "again.fseq")
    assert cli.main(["tamper", "replay", video, "-o", again, "--log-in", log]) == 0
    assert open(again, "rb").read() == open(cut, "rb").read()


def test_align_matrix_reports_cut(workspace, tmp_path, capsys):
    _, code, video = workspace
    cut = str(tmp_path / "cut.fseq")
    assert cli.main(["tamper", "cut", video, "-o", cut, "--at", "200", "--remove", "30"]) == 0
    capsys.readouterr()
    curve = str(tmp_path / "curve.txt")
    assert cli.main(["align-matrix", cut, "--code", code, "-o", str(tmp_path / "m.csv"),
                     "--search", "0:1000", "--curve", curve]) == 0
    text = open(curve).read()
    assert "30" in text


def test_manifest_replay_matches(workspace, tmp_path):
    _, code, video = workspace
    out = str(tmp_path / "ci.pgm")
    assert cli.main(["decode", video, "--code", code, "-o", out, "--offset", "100", "--window", "256"]) == 0
    assert cli.main(["replay", out + ".manifest.json"]) == 0


def test_manifest_replay_detects_changed_output(workspace, tmp_path):
    _, code, video = workspace
    out = str(tmp_path / "ci.pgm")
    assert cli.main(["decode", video, "--code", code, "-o", out, "--offset", "100", "--window", "256"]) == 0
    manifest_path = out + ".manifest.json"
    manifest = json.loads(open(manifest_path).read())
    manifest["outputs"][out] = "0" * 64
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh)
    assert cli.main(["replay", manifest_path]) == 1


def test_mask_requires_noise_or_floor(workspace, tmp_path, capsys):
    _, code, video = workspace
    assert cli.main(["mask", video, "--code", code, "-o", str(tmp_path / "m.pbm"), "--offset", "100"]) == 1
    assert "--code-floor" in capsys.readouterr().err


def test_predict_snr_table(tmp_path, capsys):
    table = str(tmp_path / "t.csv")
    assert cli.main(["predict-snr", "--a", "0.01", "--b", "0.02", "--table", table]) == 0
    rows = open(table).read().splitlines()
    assert rows[0] == "L,code_rms_times_r,w,M,snr_db"
    assert len(rows) == 25
    assert "snr_db=" in capsys.readouterr().out


def test_predict_snr_noiseless_is_infinite(capsys):
    assert cli.main(["predict-snr", "--a", "0", "--b", "0", "--manifest", "/dev/null"]) == 0
    assert "snr_db=inf" in capsys.readouterr().out


def test_selftest_passes(capsys):
    assert cli.main(["selftest", "--threads", "2"]) == 0
    out = capsys.readouterr().out
    assert "selftest=pass" in out
    assert "FAIL" not in out


def test_y4m_output_round_trips_through_decode(workspace, tmp_path):
    _, code, _ = workspace
    y4m = str(tmp_path / "clip.y4m")
    assert cli.main(["render", "--code", code, "-o", y4m, "--size", "16,16", "--frames", "64"]) == 0
    assert open(y4m, "rb").read(9) == b"YUV4MPEG2"
    assert np.isfinite(cli.read_video(y4m).data).all()
