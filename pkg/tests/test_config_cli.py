import json

import pytest

from ecisim.cli import int_list, main
from ecisim.config import DEFAULT_CONFIG, PRESETS, ConfigError, load_config, parse_config
from ecisim.scenarios import DEADLOCK, OK, STATE_SPACE, USAGE, run_scenario
from ecisim.trace import read_trace


def write(tmp_path, text, name="s.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- config -----------------------------------------------------------------------

def test_defaults_validate():
    assert parse_config().validate() == []


@pytest.mark.parametrize("text, message", [
    ("[transport]\ncredits = zero\n", "[transport] credits: expected an integer >= 1, got 'zero'"),
    ("[transport]\ncredits = 0\n", "[transport] credits"),
    ("[random]\np_deliver = 1.5\n", "[random] p_deliver"),
    ("[home]\nsubset = tiny\n", "[home] subset: expected one of"),
    ("[home]\ncaches = perhaps\n", "[home] caches"),
])
def test_bad_values_name_the_key(text, message):
    with pytest.raises(ConfigError) as e:
        parse_config(text).validate()
    assert message in str(e.value)


def test_unknown_section_and_key():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[colour]\nx = 1\n")
    with pytest.raises(ConfigError, match="unknown key 'colour'"):
        parse_config("[home]\ncolour = red\n")


def test_incompatible_subsets_are_reported():
    problems = parse_config("[home]\nsubset = stateless\n").validate()
    assert {p.name for p in problems} == {"UnsupportedReception", "OrphanReply"}
    assert parse_config("[home]\nsubset = stateless\n[remote]\nsubset = read_only\n").validate() == []


def test_missing_file():
    with pytest.raises(ConfigError, match="nope.ini"):
        load_config("/nonexistent/nope.ini")


def test_presets_load():
    for name in PRESETS:
        assert load_config(None, name).validate() == []
    with pytest.raises(ConfigError):
        load_config(None, "no-such-preset")


def test_int_list():
    assert int_list("1..4") == [1, 2, 3, 4]
    assert int_list("1,8, 16") == [1, 8, 16]


# -- scenarios ----------------------------------------------------------------------

@pytest.mark.parametrize("text", [
    "",
    "[home]\nstrategy = WriteBackOnShare\ncaches = true\n",
    "[home]\nsubset = stateless\n[remote]\nsubset = read_only\n",
    "[home]\nsubset = two_state\n[remote]\nsubset = read_only_invalidate\n",
    "[transport]\ncredits = 1\nreorder = fifo\n",
])
def test_random_scenarios_pass(text):
    sc = parse_config(text + "\n[random]\nsteps = 1500\n" if "[random]" not in text else text)
    out = run_scenario(sc)
    assert out.code == OK, out.stats
    assert out.stats["checker_violations"] == []


@pytest.mark.parametrize("kind, extra", [
    ("select", "[select]\nrows = 2000\n"),
    ("regex", "[regex]\nrows = 2000\n"),
    ("kv", "[kv]\nbuckets = 64\nlookups = 500\n"),
    ("locality", "[locality]\nresults = 300\n"),
])
def test_workload_scenarios_pass(kind, extra):
    out = run_scenario(parse_config(f"[scenario]\nkind = {kind}\n" + extra))
    assert out.code == OK, out.stats
    if kind in ("select", "regex"):
        assert out.stats["protocol"]["results_delivered_ok"]
        assert out.stats["protocol"]["checker_violations"] == []


def test_adversarial_preset_deadlocks():
    out = run_scenario(load_config(None, "adversarial-single-vc"))
    assert out.code == DEADLOCK
    assert len(out.stats["deadlock"]["cycle"]) == 2


# -- command line ---------------------------------------------------------------------

def test_print_default_config(capsys):
    assert main(["--print-default-config"]) == OK
    assert capsys.readouterr().out == DEFAULT_CONFIG


def test_no_command_is_usage():
    assert main([]) == USAGE
    assert main(["bogus"]) == USAGE


def test_simulate_is_deterministic(tmp_path, capsys):
    cfg = write(tmp_path, "[random]\nsteps = 800\n")
    runs = []
    for name in ("a.jsonl", "b.jsonl"):
        assert main(["simulate", "--config", cfg, "--seed", "7", "--trace", str(tmp_path / name)]) == OK
        runs.append((tmp_path / name).read_bytes())
    assert runs[0] == runs[1] and runs[0]
    out = capsys.readouterr().out
    first, second = out[:len(out) // 2], out[len(out) // 2:]
    assert json.loads(first) == json.loads(second)


def test_simulate_binary_trace_then_check(tmp_path, capsys):
    cfg = write(tmp_path, "[random]\nsteps = 500\n[output]\ntrace_format = binary\n")
    tr = str(tmp_path / "t.bin")
    assert main(["simulate", "--config", cfg, "--trace", tr, "--stats", str(tmp_path / "s.json")]) == OK
    assert main(["trace", "check", tr]) == OK
    assert main(["trace", "decode", tr, "--out", str(tmp_path / "t.jsonl")]) == OK
    assert read_trace(tmp_path / "t.jsonl") == read_trace(tr)
    assert json.loads((tmp_path / "s.json").read_text())["kind"] == "random"


def test_check_flags_a_faulty_trace(tmp_path, capsys):
    from ecisim.specs import inject
    from ecisim.system import healthy_run
    from ecisim.trace import write_trace
    bad = inject(healthy_run(2, steps=200).records, "spurious-payload")
    write_trace(tmp_path / "bad.jsonl", bad)
    assert main(["trace", "check", str(tmp_path / "bad.jsonl")]) == 2
    assert "payload-rules" in capsys.readouterr().out


def test_check_with_user_spec(tmp_path, capsys):
    from ecisim.system import healthy_run
    from ecisim.trace import write_trace
    write_trace(tmp_path / "t.jsonl", healthy_run(2, steps=100).records)
    spec = write(tmp_path, "spec no-upgrades\nscope global\nstate ok:\n  on kind=UpgradeSharedToExclusive -> VIOLATE\n",
                 "u.nfa")
    code = main(["trace", "check", str(tmp_path / "t.jsonl"), "--spec", spec, "--no-builtin"])
    assert code in (OK, 2)
    bad = write(tmp_path, "state a:\n  on colour=red -> a\n", "bad.nfa")
    assert main(["trace", "check", str(tmp_path / "t.jsonl"), "--spec", bad]) == USAGE
    assert "colour" in capsys.readouterr().err


def test_malformed_trace_file(tmp_path, capsys):
    p = tmp_path / "t.bin"
    p.write_bytes(b"ECIT\x01\x00" + b"\x00" * 10)
    assert main(["trace", "check", str(p)]) == USAGE
    assert "malformed record" in capsys.readouterr().err


def test_subset_mismatch_exit(tmp_path):
    cfg = write(tmp_path, "[home]\nsubset = stateless\n")
    assert main(["simulate", "--config", cfg]) == USAGE


def test_bad_config_exit(tmp_path, capsys):
    cfg = write(tmp_path, "[transport]\ncredits = zero\n")
    assert main(["simulate", "--config", cfg]) == USAGE
    assert "[transport] credits" in capsys.readouterr().err


def test_adversarial_exit_code(capsys):
    assert main(["simulate", "--preset", "adversarial-single-vc"]) == DEADLOCK
    assert json.loads(capsys.readouterr().out)["deadlock"]["cycle"]


def test_modelcheck_commands(tmp_path, capsys):
    out = tmp_path / "mc.json"
    assert main(["modelcheck", "--lines", "1", "--depth", "8", "--out", str(out)]) == OK
    assert json.loads(out.read_text())["ok"]
    assert main(["modelcheck", "--depth", "20", "--drop-forward-reply"]) == 2
    assert main(["modelcheck", "--lines", "2", "--depth", "30", "--max-states", "300"]) == STATE_SPACE


def test_bench_csv(tmp_path, capsys):
    csv_path = tmp_path / "sel.csv"
    assert main(["bench", "select", "--rows", "3000", "--threads", "1,16", "--csv", str(csv_path)]) == OK
    lines = csv_path.read_text().splitlines()
    assert len(lines) == 3 and "threads" in lines[0]
    assert main(["bench", "locality", "--results", "200", "--D", "1,4"]) == OK
    assert main(["bench", "kv", "--chain", "1,4", "--buckets", "64", "--lookups", "300", "--threads", "8"]) == OK
    assert main(["bench", "regex", "--rows", "500", "--threads", "4"]) == OK
