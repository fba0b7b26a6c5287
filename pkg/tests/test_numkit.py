import math
from fractions import Fraction

import pytest

from errors import InconsistentSystemError, UnderdeterminedSystemError, ValidationError
from numkit import (SeededRng, bit, centered, divisors_up_to, factorize, is_prime, mod_reduce, next_prime,
                    rand_bits, small_primes, solve_linear_exact, to_bits)


@pytest.mark.parametrize("seed", [-1, 1 << 64, 1.5, True])
def test_seed_must_be_u64(seed):
    with pytest.raises(ValidationError) as info:
        SeededRng(seed)
    assert info.value.field == "seed"


def test_same_seed_same_stream():
    a, b = SeededRng(42), SeededRng(42)
    assert [a.getrandbits(64) for _ in range(5)] == [b.getrandbits(64) for _ in range(5)]


def test_spawn_is_independent_of_parent_position():
    parent = SeededRng(5)
    first = parent.spawn(3).getrandbits(64)
    parent.getrandbits(64)
    assert parent.spawn(3).getrandbits(64) == first
    assert parent.spawn(4).getrandbits(64) != first


def test_rand_bits_range(rng):
    assert all(0 <= rand_bits(rng, 5) < 32 for _ in range(200))
    with pytest.raises(ValidationError):
        rand_bits(rng, 0)


def test_rand_bits_mean():
    r = SeededRng(7)
    mean = sum(rand_bits(r, 8) for _ in range(10_000)) / 10_000
    assert 117 <= mean <= 138


@pytest.mark.parametrize("x, l, expected", [(34, 2, 2), (38, 2, 2), (3, 2, 3), (-1, 3, 7)])
def test_mod_reduce(x, l, expected):
    assert mod_reduce(x, l) == expected


def test_bits_msb_first():
    assert to_bits(2, 2) == [1, 0]
    assert to_bits(3, 4) == [0, 0, 1, 1]
    assert bit(7, 2) == 1 and bit(3, 2) == 0


@pytest.mark.parametrize("x, mod, expected", [(0, 7, 0), (3, 7, 3), (4, 7, -3), (6, 7, -1), (-2, 7, -2)])
def test_centered(x, mod, expected):
    assert centered(x, mod) == expected


def test_is_prime_agrees_with_sieve():
    primes = set(small_primes(2000))
    assert all(is_prime(n) == (n in primes) for n in range(2000))


def test_is_prime_large():
    assert is_prime(2**61 - 1)
    assert not is_prime((2**61 - 1) * (2**31 - 1))
    assert next_prime(2**20) == 1048583


@pytest.mark.parametrize("n, expected", [
    (1, []),
    (210, [2, 3, 5, 7]),
    (2**10, [2] * 10),
    (1000003 * 1000033, [1000003, 1000033]),
    (2**31 - 1, [2**31 - 1]),
])
def test_factorize(n, expected):
    assert factorize(n) == expected


def test_factorize_rejects_zero():
    with pytest.raises(ValidationError):
        factorize(0)


def test_factorize_beyond_trial_limit():
    n = 999983 * 1000003 * 3
    assert factorize(n, trial_limit=1000) == [3, 999983, 1000003]


def test_factorize_product_over_random_draws():
    r = SeededRng(40)
    for _ in range(1000):
        n = r.randint(1, 2**40)
        factors = factorize(n, trial_limit=1000)
        assert math.prod(factors) == n
        assert all(is_prime(f) for f in factors)


def test_divisor_count_parity():
    for n in range(1, 3000):
        squares = math.isqrt(n) ** 2 == n
        assert (len(divisors_up_to(n, n)) % 2 == 1) == squares


def test_divisors_up_to():
    assert divisors_up_to(210, 100) == [1, 2, 3, 5, 6, 7, 10, 14, 15, 21, 30, 35, 42, 70]
    assert divisors_up_to(1, 10) == [1]
    assert divisors_up_to(97, 50) == [1]


def test_solve_linear_exact_unique():
    assert solve_linear_exact([(20, 0, 60), (0, 20, 80)]) == (3, 4)
    x, y = solve_linear_exact([(2, 0, 1), (0, 4, 1), (2, 4, 2)])
    assert (x, y) == (Fraction(1, 2), Fraction(1, 4))


def test_solve_linear_underdetermined():
    with pytest.raises(UnderdeterminedSystemError):
        solve_linear_exact([(2, 0, 4), (4, 0, 8)])


def test_solve_linear_inconsistent():
    with pytest.raises(InconsistentSystemError):
        solve_linear_exact([(1, 0, 1), (0, 1, 1), (1, 1, 3)])
