import io
import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperdyn.cli import run
from hyperdyn.errors import ParseError, ValidationError
from hyperdyn.io import (
    dump_json,
    load_model,
    make_header,
    parse_model_text,
    read_matrix,
    read_orbit,
    read_partition,
    read_words,
    to_text,
    write_matrix,
    write_orbit,
    write_partition,
    write_words,
)
from hyperdyn.maps import horseshoe
from hyperdyn.partition import base_partition, refine_once, word_partition
from hyperdyn.symbolic import SymbolWindow


def cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


# --- model files ---------------------------------------------------------------


def test_model_file_keeps_rationals_exact():
    m = parse_model_text("kind = horseshoe  # affine\nname = mine\nlambda = 1/3\n")
    assert m.kind == "affine_horseshoe" and m.name == "mine"
    assert m.hyp.lam == pytest.approx(1 / 3)


def test_matrix_implies_toral_model():
    m = parse_model_text("matrix = 3,2,1,1\ndelta0 = 0.05\n")
    assert m.kind == "cat_map" and m.hyp.delta0 == 0.05


@pytest.mark.parametrize("text, line, key", [
    ("kind = horseshoe\nspeed = 3\n", 2, "speed"),
    ("kind = catmap\nkind = catmap\n", 2, "kind"),
    ("kind = catmap\n\nlambda = fast\n", 3, "lambda"),
    ("kind = catmap\nmatrix = 1,2,3\n", 2, "matrix"),
    ("kind = torus\n", 1, "kind"),
    ("kind catmap\n", 1, None),
])
def test_model_errors_name_line_and_key(text, line, key):
    with pytest.raises(ParseError) as info:
        parse_model_text(text)
    assert info.value.line == line and info.value.key == key
    assert f"line {line}" in str(info.value)


def test_missing_kind():
    with pytest.raises(ParseError) as info:
        parse_model_text("# empty\n")
    assert info.value.key == "kind"


def test_inconsistent_constants_fail_validation():
    with pytest.raises(ValidationError):
        parse_model_text("kind = catmap\nlambda = 2\n")


def test_load_model_from_file(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("kind = horseshoe\n")
    assert load_model(path).kind == load_model("horseshoe").kind
    with pytest.raises(ParseError):
        load_model(tmp_path / "absent.txt")


# --- round trips ---------------------------------------------------------------


@settings(max_examples=30)
@given(st.integers(1, 6).flatmap(lambda n: st.lists(st.integers(0, 9), min_size=n * n, max_size=n * n)))
def test_matrix_round_trip(vals):
    n = int(round(len(vals) ** 0.5))
    A = np.array(vals).reshape(n, n)
    back = read_matrix(io.StringIO(to_text(write_matrix, A, make_header(["x"], 1))))
    assert np.array_equal(back, A)


def test_matrix_must_be_square():
    with pytest.raises(ParseError):
        read_matrix(io.StringIO("1 0\n0\n"))
    with pytest.raises(ParseError) as info:
        read_matrix(io.StringIO("1 x\n0 1\n"))
    assert info.value.line == 1


@settings(max_examples=30)
@given(st.lists(st.tuples(st.lists(st.integers(0, 12), min_size=1, max_size=8), st.integers(-5, 5),
                          st.booleans()), min_size=1, max_size=5))
def test_words_round_trip(items):
    words = [SymbolWindow(tuple(s), o, p) for s, o, p in items]
    assert read_words(io.StringIO(to_text(write_words, words))) == words


def test_word_file_rejects_stray_tokens():
    with pytest.raises(ParseError) as info:
        read_words(io.StringIO("01 offset=1\n10 backwards\n"))
    assert info.value.line == 2


@pytest.mark.parametrize("make", [lambda: refine_once(horseshoe(), base_partition(horseshoe())),
                                  lambda: word_partition(horseshoe(), 3)])
def test_partition_round_trip_is_lossless(make):
    part = make()
    back = read_partition(io.StringIO(to_text(write_partition, part, make_header(["p"], 0))))
    for name in ("s_lo", "s_hi", "u_lo", "u_hi", "words"):
        assert np.array_equal(getattr(back, name), getattr(part, name))
    assert (back.model, back.center, back.rounds) == (part.model, part.center, part.rounds)


def test_orbit_round_trip():
    model = horseshoe()
    pts = [model.point(0.1 * i, 1 / 7) for i in range(5)]
    assert read_orbit(io.StringIO(to_text(write_orbit, pts)), model) == pts


def test_json_handles_numpy_and_fractions():
    doc = json.loads(dump_json({"a": np.float64(0.5), "b": np.arange(3), "c": Fraction(1, 3)}))
    assert doc["a"] == 0.5 and doc["b"] == [0, 1, 2] and doc["c"] == pytest.approx(1 / 3)


# --- command line --------------------------------------------------------------


def test_constants_json():
    code, out, _ = cli("constants", "--delta", "1e-6")
    assert code == 0
    doc = json.loads(out)
    assert doc["header"]["tool"] == "hyperdyn" and doc["header"]["argv"][0] == "constants"


@pytest.mark.parametrize("argv", [
    ("constants",),
    ("entropy", "--k", "2"),
    ("shadow", "--model", "catmap", "--N", "20", "--count", "3", "--jobs", "2", "--seed", "5"),
    ("partition", "--k", "2", "--format", "csv"),
])
def test_output_is_deterministic(argv):
    first, second = cli(*argv), cli(*argv)
    assert first[0] == 0 and first == second


def test_seed_changes_generated_orbits():
    a = json.loads(cli("shadow", "--model", "catmap", "--N", "10", "--seed", "1")[1])
    b = json.loads(cli("shadow", "--model", "catmap", "--N", "10", "--seed", "2")[1])
    assert a["header"]["seed"] == 1 and a != b


def test_entropy_is_log2():
    doc = json.loads(cli("entropy", "--k", "3", "--forward")[1])
    assert doc["entropy"] == pytest.approx(np.log(2), abs=1e-12)


def test_out_file_matches_stdout(tmp_path):
    path = tmp_path / "A.txt"
    code, out, _ = cli("matrix", "--k", "1", "--format", "text", "--out", str(path))
    assert code == 0 and out == ""
    body = [l for l in path.read_text().splitlines() if not l.startswith("# argv")]
    assert body == [l for l in cli("matrix", "--k", "1", "--format", "text")[1].splitlines()
                    if not l.startswith("# argv")]
    assert read_matrix(path).shape == (8, 8)


def test_partition_csv_reads_back(tmp_path):
    path = tmp_path / "p.csv"
    assert cli("partition", "--k", "2", "--format", "csv", "--out", str(path))[0] == 0
    part = read_partition(path)
    assert part.m == 32 and part.rounds == 2


def test_decode_word():
    code, out, _ = cli("decode", "--word", "01", "--periodic", "--N", "30")
    assert code == 0
    doc = json.loads(out)
    assert doc["points"][0]["point"] == pytest.approx([0.75, 0.25], abs=1e-12)


@pytest.mark.parametrize("argv, code", [
    (("entropy", "--bogus"), 2),
    (("nonsense",), 2),
    (("constants", "--model", "no/such/file"), 2),
    (("decode", "--model", "catmap", "--word", "01"), 1),
    (("bracket", "--model", "catmap", "--point", "0.1,0.1", "--point2", "0.4,0.4"), 1),
    (("close", "--model", "catmap", "--point", "0.3,0.7", "--N", "1"), 1),
])
def test_exit_codes(argv, code):
    got, _, err = cli(*argv)
    assert got == code
    assert err.startswith(("hyperdyn:", "usage:"))


def test_bad_model_file_reports_line(tmp_path):
    path = tmp_path / "m.txt"
    path.write_text("kind = catmap\nspin = 2\n")
    code, _, err = cli("constants", "--model", str(path))
    assert code == 2 and "line 2" in err and "spin" in err


def test_verify_passes_on_refined_partition():
    assert cli("verify", "--k", "2", "--samples", "20")[0] == 0


def test_reproduce_horseshoe_table():
    code, out, _ = cli("reproduce-horseshoe", "--format", "text")
    assert code == 0
    rows = out.splitlines()[2:]
    assert len(rows) == 5 and all(r.split("  ")[-1] and "  yes  " in r for r in rows)


def test_unsupported_format_is_a_usage_error():
    code, out, err = cli("entropy", "--k", "1", "--format", "csv")
    assert code == 2 and out == "" and "json" in err
