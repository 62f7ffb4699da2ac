import pytest

from secnn.gradcheck import run_scope


@pytest.mark.parametrize("scope", ["layers", "blocks", "model"])
def test_scope_passes(scope):
    units = run_scope(scope)
    assert units
    for u in units:
        assert u.passed, (u.name, u.max_rel_err)


def test_repeatable():
    a = [(u.name, u.max_rel_err) for u in run_scope("layers", seed=3)]
    b = [(u.name, u.max_rel_err) for u in run_scope("layers", seed=3)]
    assert a == b


def test_unknown_scope():
    with pytest.raises(ValueError):
        run_scope("everything")
