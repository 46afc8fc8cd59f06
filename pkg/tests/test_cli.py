import json
import subprocess
import sys
from pathlib import Path

import pytest

SCRIPT = Path(__file__).parent.parent / "scripts" / "analyze_sessions.py"


def run_cli(*args, cwd):
    return subprocess.run(
        [sys.executable, str(SCRIPT), *map(str, args)], cwd=cwd, capture_output=True, text=True, timeout=300,
    )


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    result = run_cli("generate", "--seed", 7, "--translators", 4, "--sessions", 2, "--out", "gen", cwd=root)
    assert result.returncode == 0, result.stdout + result.stderr
    return root


def tree_bytes(directory):
    return {str(p.relative_to(directory)): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def test_generate_writes_corpus(generated):
    sessions = sorted((generated / "gen" / "sessions").glob("*.session.tsv"))
    assert len(sessions) == 8
    assert len(list((generated / "gen" / "sessions").glob("*.hof.tsv"))) == 8
    assert (generated / "gen" / "profiles.csv").is_file()
    planted = json.loads((generated / "gen" / "planted.json").read_text())
    assert planted["seed"] == 7


def test_validate(generated):
    result = run_cli("validate", "gen/sessions", cwd=generated)
    assert result.returncode == 0, result.stdout + result.stderr
    assert "Validated 8 session file(s), 0 with errors." in result.stdout


@pytest.mark.parametrize("command", [
    ["profile", "--format", "csv,json"],
    ["segment", "--profiles", "gen/profiles.csv"],
    ["hof"],
    ["identify"],
    ["render", "--dist", "cdf", "--graph", "P01_S1"],
])
def test_outputs_are_byte_identical_across_runs(generated, command):
    name = command[0]
    outs = []
    for run in ("first", "second"):
        out = f"{name}_{run}"
        result = run_cli(*command, "gen/sessions", "--out", out, cwd=generated)
        assert result.returncode == 0, result.stdout + result.stderr
        outs.append(tree_bytes(generated / out))
    assert outs[0] == outs[1]
    assert "manifest.json" in outs[0]


def test_segment_writes_hierarchy(generated):
    result = run_cli("segment", "gen/sessions", "--profiles", "gen/profiles.csv", "--out", "seg", cwd=generated)
    assert result.returncode == 0, result.stdout + result.stderr
    written = tree_bytes(generated / "seg")
    assert "tasks.csv" in written
    assert len([name for name in written if name.startswith("segments")]) == 8
    manifest = json.loads(written["manifest.json"])
    assert manifest["command"] == "segment"
    assert "gen/profiles.csv" in manifest["inputs"]


def test_inverted_rule_flag(generated):
    for flag, out in (("--paper-literal", "literal"), ("--inverted-rule", "inv")):
        result = run_cli("identify", "gen/sessions", flag, "--out", out, cwd=generated)
        assert result.returncode == 0, result.stdout + result.stderr
        assert "under the inverted rule" in result.stdout
    literal, inverted = (generated / out / "identification.csv" for out in ("literal", "inv"))
    assert literal.read_bytes() == inverted.read_bytes()


def test_no_sessions_exits_2(tmp_path):
    (tmp_path / "empty").mkdir()
    result = run_cli("validate", "empty", cwd=tmp_path)
    assert result.returncode == 2


def test_bad_session_exits_1(tmp_path):
    (tmp_path / "bad.session.tsv").write_text("#study=SYN\ntime\tkind\n", encoding="utf-8")
    assert run_cli("validate", "bad.session.tsv", cwd=tmp_path).returncode == 1
    assert run_cli("segment", "bad.session.tsv", cwd=tmp_path).returncode == 1


def test_invalid_utf8_exits_1(tmp_path):
    (tmp_path / "bad.session.tsv").write_bytes(b"#study=SYN\n\xff\n")
    result = run_cli("validate", "bad.session.tsv", cwd=tmp_path)
    assert result.returncode == 1
    assert "not valid UTF-8" in result.stdout
    assert "Traceback" not in result.stderr
    assert run_cli("profile", "bad.session.tsv", cwd=tmp_path).returncode == 1


def test_bad_config_exits_2(tmp_path):
    (tmp_path / "broken.ini").write_text("ks_alpha = 7\n", encoding="utf-8")
    result = run_cli("generate", "--config", "broken.ini", "--out", "gen", cwd=tmp_path)
    assert result.returncode == 2
    assert "Configuration error" in result.stdout


def test_validate_setup(tmp_path):
    setup_script = SCRIPT.with_name("validate_setup.py")
    result = subprocess.run([sys.executable, str(setup_script)], cwd=tmp_path, capture_output=True, text=True)
    assert result.returncode == 0, result.stdout + result.stderr
    assert "built-in defaults" in result.stdout

    (tmp_path / "config.ini").write_text("color.T1 = not-a-colour\n", encoding="utf-8")
    result = subprocess.run([sys.executable, str(setup_script)], cwd=tmp_path, capture_output=True, text=True)
    assert result.returncode == 1
    assert "invalid colour" in result.stdout


def test_convert_translog_xml(tmp_path):
    (tmp_path / "P05_T1.xml").write_text(
        '<LogFile><Project><Languages source="en" target="da" /></Project><Events>'
        '<Key Time="100" Cursor="0" Type="insert" Value="h" />'
        '<Key Time="260" Cursor="1" Type="insert" Value="e" />'
        '<Fix Time="300" Win="2" Dur="120" Cursor="1" />'
        '</Events></LogFile>',
        encoding="utf-8",
    )
    result = run_cli("convert", "P05_T1.xml", "--study", "KTHJ08", "--translator", "P05", "--out", "conv",
                     cwd=tmp_path)
    assert result.returncode == 0, result.stdout + result.stderr
    converted = (tmp_path / "conv" / "P05_T1.session.tsv").read_text(encoding="utf-8")
    assert "#target_lang=da" in converted
    assert run_cli("validate", "conv", cwd=tmp_path).returncode == 0
