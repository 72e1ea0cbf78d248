import json
import os

import pytest

import hermlat
from hermlat.cli import main
from hermlat.etale import EtaleAlgebra
from hermlat.specfile import (
    element_str,
    parse_element,
    parse_lattice,
    parse_matrix,
)
from hermlat.errors import SpecFileError
from hermlat.linalg import mat_eq


CATALOG = hermlat.catalog_files()


def test_catalog_is_large_enough():
    assert len(CATALOG) >= 10


@pytest.mark.parametrize("path", CATALOG, ids=[os.path.basename(p) for p in CATALOG])
def test_catalog_parses(path):
    with open(path) as fh:
        lat = parse_lattice(fh.read())
    assert lat.n >= 1


def test_parse_errors_are_positional(tmp_path):
    bad = "[field]\np = 2\n[algebra]\nkind = split\n[gram]\n1, oops\noops, 1\n"
    with pytest.raises(SpecFileError) as exc:
        parse_lattice(bad)
    assert "line 6" in str(exc.value)


def test_element_roundtrip():
    from hermlat.localfield import LocalField

    K = LocalField(2, unramified_poly=[1, 1])
    alg = EtaleAlgebra.quadratic(K, 0, -2)
    elems = [
        alg.from_int(7),
        alg.gen() * 3 + alg.from_int(1),
        alg.from_K(K.gen_unramified()) * alg.gen(),
        alg.one / alg.from_int(-3),
        alg.gen() ** -1,
    ]
    for e in elems:
        back = parse_element(alg, element_str(e))
        assert (back - e).is_zero()


def test_gram_roundtrip_on_catalog():
    for path in CATALOG:
        with open(path) as fh:
            text = fh.read()
        lat = parse_lattice(text)
        rendered = "\n".join(", ".join(element_str(e) for e in row)
                              for row in lat.gram)
        again = parse_matrix(lat.alg, rendered)
        assert mat_eq(again, lat.gram)


def _cat(name):
    return hermlat.catalog_path(name)


def test_cli_classify_and_jordan(capsys):
    assert main(["classify", "--spec", _cat("q2sqrt2-a01.lat")]) == 0
    out = capsys.readouterr().out
    recs = [json.loads(line) for line in out.splitlines()]
    assert recs[0]["record"] == "jordan_type"
    assert any(r.get("record") == "hyperbolic" and r["splits"] is False
               for r in recs)
    assert main(["jordan", "--spec", _cat("inert3.lat")]) == 0


def test_cli_isometric(capsys):
    rc = main(["isometric", _cat("q2sqrt2-a01.lat"), _cat("q2sqrt2-a01.lat")])
    assert rc == 0
    rec = json.loads(capsys.readouterr().out.splitlines()[0])
    assert rec["result"] is True and rec["failed_condition"] is None
    rc = main(["isometric", _cat("q2sqrt2-a01.lat"), _cat("q2sqrt2-h1h1.lat")])
    assert rc == 0
    rec = json.loads(capsys.readouterr().out.splitlines()[0])
    assert rec["result"] is False
    assert rec["failed_condition"] == 1


def test_cli_factor_identity(tmp_path, capsys):
    mat = tmp_path / "id.mat"
    mat.write_text("1, 0\n0, 1\n")
    rc = main(["factor", "--spec", _cat("split2.lat"),
               "--isometry", str(mat)])
    assert rc == 0
    recs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert recs[-1]["record"] == "certificate"
    assert recs[-1]["factors"] == 0


def test_cli_factor_bad_input(tmp_path, capsys):
    mat = tmp_path / "swap.mat"
    mat.write_text("0, 1\n1, 0\n")
    rc = main(["factor", "--spec", _cat("split2.lat"),
               "--isometry", str(mat)])
    assert rc == 2


def test_cli_roundtrip_deterministic(tmp_path, capsys):
    args = ["roundtrip", "--spec", _cat("inert3.lat"),
            "--trials", "3", "--seed", "5"]
    assert main(args) == 0
    out1 = capsys.readouterr().out
    assert main(args) == 0
    out2 = capsys.readouterr().out
    assert out1 == out2
    rec = json.loads(out1.splitlines()[0])
    assert rec["passed"] == 3


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0


def test_cli_report_file(tmp_path, capsys):
    report = tmp_path / "report.jsonl"
    assert main(["classify", "--spec", _cat("split2.lat"),
                 "--report", str(report)]) == 0
    assert report.read_text() == capsys.readouterr().out
