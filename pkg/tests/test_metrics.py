from __future__ import annotations

import random

import pytest

from t2vqa.metrics import UndefinedCorrelationError, krcc, plcc, rmse, srocc

from .oracles import brute_pearson, brute_rmse, brute_spearman, brute_taub


def random_pair(rng, n):
    x = [rng.uniform(-5, 5) for _ in range(n)]
    y = [rng.uniform(-5, 5) for _ in range(n)]
    if rng.random() < 0.5:
        # quantize to force ties
        x = [round(v) for v in x]
    if rng.random() < 0.5:
        y = [round(v) for v in y]
    return x, y


def test_matches_brute_oracles_with_ties():
    rng = random.Random(101)
    done = 0
    while done < 100:
        n = rng.randint(3, 50)
        x, y = random_pair(rng, n)
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        assert plcc(x, y) == pytest.approx(brute_pearson(x, y), abs=1e-9)
        assert srocc(x, y) == pytest.approx(brute_spearman(x, y), abs=1e-9)
        assert krcc(x, y) == pytest.approx(brute_taub(x, y), abs=1e-9)
        assert rmse(x, y) == pytest.approx(brute_rmse(x, y), abs=1e-9)
        done += 1


def test_perfect_monotone_agreement():
    x = [1.0, 2.0, 3.0, 4.0, 5.0]
    y = [10.0, 20.0, 25.0, 70.0, 71.0]
    assert srocc(x, y) == pytest.approx(1.0, abs=1e-12)
    assert krcc(x, y) == pytest.approx(1.0, abs=1e-12)


def test_reversal():
    x = [1.0, 2.0, 3.0, 4.0]
    y = [9.0, 7.0, 5.0, 3.0]
    assert srocc(x, y) == pytest.approx(-1.0, abs=1e-12)
    assert krcc(x, y) == pytest.approx(-1.0, abs=1e-12)
    assert plcc(x, y) == pytest.approx(-1.0, abs=1e-12)


def test_rmse_identical_is_zero():
    x = [3.0, 1.0, 4.0]
    assert rmse(x, list(x)) == 0.0


def test_constant_input_is_undefined():
    with pytest.raises(UndefinedCorrelationError):
        plcc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(UndefinedCorrelationError):
        srocc([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
    with pytest.raises(UndefinedCorrelationError):
        krcc([2.0, 2.0], [1.0, 2.0])


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        plcc([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        rmse([1.0], [])


def test_too_short_rejected():
    with pytest.raises(ValueError):
        srocc([1.0], [2.0])
