import json

from breathcue.goldens import CASES_PATH, load_cases, perturbed, run_goldens


def test_all_cases_pass():
    results = run_goldens()
    assert results and not [r.line() for r in results if r.failed]
    kinds = {r.kind for r in results}
    assert kinds == {"exact", "bound", "deferred"}


def test_order_is_deterministic():
    names = [r.name for r in run_goldens()]
    assert names == sorted(names) == [r.name for r in run_goldens()]


def test_perturbing_one_expected_value_fails_exactly_one():
    cases = load_cases()
    for name in ("affine_scalar", "cllr_ln3"):
        results = run_goldens(cases=perturbed(cases, name))
        failed = [r.name for r in results if r.failed]
        assert failed == [name]


def test_missing_fixture_file_fails(tmp_path):
    results = run_goldens(tmp_path / "absent.json")
    assert len(results) == 1 and results[0].failed and "fixtures" in results[0].line()


def test_fixture_file_is_sorted_and_versioned():
    data = json.loads(CASES_PATH.read_text())
    names = [c["name"] for c in data["cases"]]
    assert data["format"] == 1 and names == sorted(names) and len(set(names)) == len(names)
