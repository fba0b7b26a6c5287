"""Exact integer/rational arithmetic, seeded randomness, factoring and 2x2 linear solving."""
import hashlib
import random
from fractions import Fraction
from functools import lru_cache

import gmpy2
import numpy as np

from config import Config
from errors import InconsistentSystemError, UnderdeterminedSystemError, ValidationError

U64 = 1 << 64

# Miller-Rabin with these bases is exact below 3.317e24
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
_MR_EXACT_BELOW = 3317044064679887385961981


class SeededRng:
    """Single-owner deterministic random stream.

    Wraps a Mersenne Twister seeded with a 64-bit integer; ``spawn`` derives
    independent child streams by index so batches can run in any order.
    """

    def __init__(self, seed):
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < U64:
            raise ValidationError("seed", f"must be an unsigned 64-bit integer, got {seed!r}")
        self.seed = seed
        self.position = 0
        self._random = random.Random(seed)

    def getrandbits(self, n_bits):
        self.position += 1
        return self._random.getrandbits(n_bits)

    def randbelow(self, n):
        self.position += 1
        return self._random.randrange(n)

    def randint(self, low, high):
        """Uniform integer in [low, high]"""
        self.position += 1
        return self._random.randint(low, high)

    def shuffle(self, items):
        self.position += 1
        self._random.shuffle(items)

    def random_bytes(self, n):
        return self.getrandbits(8 * n).to_bytes(n, "big")

    def spawn(self, index):
        digest = hashlib.sha256(f"{self.seed}:{index}".encode()).digest()
        return SeededRng(int.from_bytes(digest[:8], "big"))

    def __repr__(self):
        return f"<SeededRng seed={self.seed} position={self.position}>"


def rand_bits(rng, n_bits):
    """Uniform integer in [0, 2^n_bits)"""
    if n_bits < 1:
        raise ValidationError("n_bits", "must be >= 1")
    return rng.getrandbits(n_bits)


def mod_reduce(x, l):
    """x mod 2^l, always in [0, 2^l)"""
    if l < 1:
        raise ValidationError("l", "must be >= 1")
    return x % (1 << l)


def bit(x, i):
    return (x >> i) & 1


def to_bits(x, l):
    """Bits of x, most significant first, exactly l of them"""
    return [(x >> j) & 1 for j in range(l - 1, -1, -1)]


def centered(x, modulus):
    """Centered representative of x mod modulus, in (-modulus/2, modulus/2]"""
    x %= modulus
    return x - modulus if x > modulus // 2 else x


def is_prime(n):
    if n < 2:
        return False
    if n < _MR_EXACT_BELOW:
        for p in _MR_BASES:
            if n % p == 0:
                return n == p
        d, s = n - 1, 0
        while d % 2 == 0:
            d //= 2
            s += 1
        for a in _MR_BASES:
            x = gmpy2.powmod(a, d, n)
            if x == 1 or x == n - 1:
                continue
            for _ in range(s - 1):
                x = gmpy2.powmod(x, 2, n)
                if x == n - 1:
                    break
            else:
                return False
        return True
    return bool(gmpy2.is_prime(n, 64))


def next_prime(n):
    """Smallest prime strictly greater than n"""
    return int(gmpy2.next_prime(n))


@lru_cache(maxsize=4)
def small_primes(limit):
    """All primes <= limit (sieve of Eratosthenes)"""
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for i in range(2, int(limit ** 0.5) + 1):
        if sieve[i]:
            sieve[i * i::i] = False
    return tuple(int(p) for p in np.nonzero(sieve)[0])


def pollard_rho(n):
    """A non-trivial factor of composite odd n (Brent's cycle detection)"""
    for c in range(1, n):
        x = y = 2
        power = lam = 1
        d = 1
        while d == 1:
            if power == lam:
                y = x
                power *= 2
                lam = 0
            x = (x * x + c) % n
            lam += 1
            d = int(gmpy2.gcd(abs(x - y), n))
        if d != n:
            return d
    raise ArithmeticError(f"pollard rho failed on {n}")


def factorize(n, trial_limit=None):
    """Prime factors of n with multiplicity, ascending"""
    if n < 1:
        raise ValidationError("n", f"factorize requires n >= 1, got {n}")
    factors = []
    limit = trial_limit or Config.FACTOR_TRIAL_LIMIT
    for p in small_primes(limit):
        if p * p > n:
            break
        while n % p == 0:
            factors.append(p)
            n //= p
    if n == 1:
        return factors

    stack = [n]
    while stack:
        m = stack.pop()
        if m == 1:
            continue
        if is_prime(m):
            factors.append(m)
            continue
        d = pollard_rho(m)
        stack.extend((d, m // d))
    return sorted(factors)


def divisors_up_to(n, bound):
    """Divisors d of n with 1 <= d <= bound, ascending"""
    if n < 1:
        raise ValidationError("n", f"divisors_up_to requires n >= 1, got {n}")
    if bound < 1:
        raise ValidationError("bound", "must be >= 1")
    multiplicity = {}
    for p in factorize(n):
        multiplicity[p] = multiplicity.get(p, 0) + 1

    divisors = [1]
    for p, e in multiplicity.items():
        grown = []
        for d in divisors:
            value = d
            for _ in range(e):
                value *= p
                if value > bound:
                    break
                grown.append(value)
        divisors.extend(grown)
    return sorted(divisors)


def solve_linear_exact(rows):
    """Exact solution (X, Y) of rows a*X + b*Y = c.

    Raises UnderdeterminedSystemError when the coefficient rank is < 2 and the
    rows agree, InconsistentSystemError when no common solution exists.
    """
    if len(rows) < 2:
        raise ValidationError("rows", "at least two rows are required")
    matrix = [[Fraction(a), Fraction(b), Fraction(c)] for a, b, c in rows]

    rank = 0
    pivots = []
    for col in (0, 1):
        pivot = next((r for r in range(rank, len(matrix)) if matrix[r][col] != 0), None)
        if pivot is None:
            continue
        matrix[rank], matrix[pivot] = matrix[pivot], matrix[rank]
        lead = matrix[rank][col]
        matrix[rank] = [v / lead for v in matrix[rank]]
        for r in range(len(matrix)):
            if r != rank and matrix[r][col] != 0:
                factor = matrix[r][col]
                matrix[r] = [v - factor * w for v, w in zip(matrix[r], matrix[rank])]
        pivots.append(col)
        rank += 1

    if any(row[2] != 0 for row in matrix[rank:]):
        raise InconsistentSystemError(f"{len(rows)} rows have no common solution")
    if rank < 2:
        raise UnderdeterminedSystemError(f"coefficient rank {rank} < 2")
    x, y = matrix[0][2], matrix[1][2]

    for a, b, c in rows:
        if a * x + b * y != c:
            raise InconsistentSystemError("solution fails substitution check")
    return x, y
