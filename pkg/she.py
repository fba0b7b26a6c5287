"""Leveled somewhat-homomorphic encryption for location coordinates and distances.

Two interchangeable backends sit behind the same functions:

* ``transparent``: the payload records the plaintext, an operation log and a
  nonce; depth and noise are synthetic counters. Default for protocol and
  attack runs.
* ``bfv``: a textbook ring-LWE scheme over Z_q[X]/(X^n + 1) with scalar
  plaintexts in the constant coefficient, tensor-and-rescale multiplication and
  base-2^w relinearization. Noise is tracked as a worst-case bound; an
  operation that would push it past the decryption threshold raises instead of
  producing a ciphertext that decrypts wrongly.

Plaintexts are residues mod p. Signed values use ``encode_signed`` /
``decode_signed`` (centered representative).
"""
import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace

import gmpy2
import numpy as np

from config import Config
from errors import (DepthExhaustedError, KeyMismatchError, NoiseBudgetExhaustedError,
                    PlaintextRangeError, ValidationError)
from numkit import SeededRng, centered, is_prime

SECURITY_LEVELS = ("toy", "small")
RING_DEGREE = {"toy": 16, "small": 32}
ERROR_ETA = 3
SYNTHETIC_BITS_PER_LEVEL = 20


@dataclass(frozen=True)
class SheParams:
    plaintext_modulus: int
    security_level: str = "toy"
    max_depth: int = 2
    seed: int = 0
    backend: str = "transparent"

    def validate(self):
        p = self.plaintext_modulus
        if not isinstance(p, int) or p < 3 or not _is_prime_power(p):
            raise ValidationError("plaintext_modulus", f"must be a prime or prime power >= 3, got {p!r}")
        if self.security_level not in SECURITY_LEVELS:
            raise ValidationError("security_level", f"must be one of {SECURITY_LEVELS}")
        if self.max_depth < 2:
            raise ValidationError("max_depth", "must be >= 2")
        if self.backend not in BACKENDS:
            raise ValidationError("she_backend", f"must be one of {tuple(BACKENDS)}")
        return self


@dataclass(frozen=True, eq=False)
class ShePublicKey:
    key_id: str
    params: SheParams
    material: tuple = ()

    @property
    def backend(self):
        return BACKENDS[self.params.backend]


@dataclass(frozen=True, eq=False)
class SheSecretKey:
    key_id: str
    params: SheParams
    material: tuple = ()


@dataclass(frozen=True, eq=False)
class SheKeypair:
    public: ShePublicKey
    secret: SheSecretKey
    params: SheParams


@dataclass(frozen=True, eq=False)
class SheCiphertext:
    public: ShePublicKey
    payload: tuple
    depth_used: int = 0
    noise_budget_bits: int = 0
    noise_bound: int = 0
    ops: tuple = field(default=())

    @property
    def key_id(self):
        return self.public.key_id


def _is_prime_power(n):
    if is_prime(n):
        return True
    for k in range(2, n.bit_length() + 1):
        root, exact = gmpy2.iroot(n, k)
        if exact and is_prime(int(root)):
            return True
    return False


def encode_signed(x, p):
    """Residue of a signed integer mod p (negative x becomes p - |x|)"""
    if abs(x) > p // 2:
        raise PlaintextRangeError(f"|{x}| does not fit a centered residue mod {p}")
    return x % p


def decode_signed(v, p):
    return centered(v, p)


class SheBackend(ABC):
    name = None
    format_tag = None

    @abstractmethod
    def keygen(self, params, rng):
        pass

    @abstractmethod
    def encrypt(self, pk, m, rng):
        pass

    @abstractmethod
    def decrypt(self, sk, ct):
        pass

    @abstractmethod
    def add(self, a, b, negate_b=False):
        pass

    @abstractmethod
    def add_plain(self, ct, m):
        pass

    @abstractmethod
    def mul_plain(self, ct, m):
        pass

    @abstractmethod
    def mul(self, a, b):
        pass

    @abstractmethod
    def payload_record(self, ct):
        pass


class TransparentSheBackend(SheBackend):
    """Oracle backend: payload is (plaintext, nonce)"""
    name = "transparent"
    format_tag = "she/transparent/v1"

    def _fresh_budget(self, params):
        return SYNTHETIC_BITS_PER_LEVEL * (params.max_depth + 1)

    def keygen(self, params, rng):
        key_id = rng.random_bytes(16).hex()
        public = ShePublicKey(key_id=key_id, params=params)
        return SheKeypair(public=public, secret=SheSecretKey(key_id=key_id, params=params), params=params)

    def encrypt(self, pk, m, rng):
        return SheCiphertext(
            public=pk,
            payload=(m, rng.getrandbits(64)),
            noise_budget_bits=self._fresh_budget(pk.params),
            ops=("enc",)
        )

    def decrypt(self, sk, ct):
        return ct.payload[0]

    def add(self, a, b, negate_b=False):
        p = a.public.params.plaintext_modulus
        mb = -b.payload[0] if negate_b else b.payload[0]
        return SheCiphertext(
            public=a.public,
            payload=((a.payload[0] + mb) % p, a.payload[1] ^ b.payload[1]),
            depth_used=max(a.depth_used, b.depth_used),
            noise_budget_bits=min(a.noise_budget_bits, b.noise_budget_bits),
            ops=a.ops + b.ops + ("sub" if negate_b else "add",)
        )

    def add_plain(self, ct, m):
        p = ct.public.params.plaintext_modulus
        return replace(ct, payload=((ct.payload[0] + m) % p, ct.payload[1]), ops=ct.ops + ("add_plain",))

    def mul_plain(self, ct, m):
        p = ct.public.params.plaintext_modulus
        return replace(ct, payload=((ct.payload[0] * m) % p, ct.payload[1]), ops=ct.ops + ("mul_plain",))

    def mul(self, a, b):
        p = a.public.params.plaintext_modulus
        return SheCiphertext(
            public=a.public,
            payload=((a.payload[0] * b.payload[0]) % p, a.payload[1] ^ b.payload[1]),
            depth_used=max(a.depth_used, b.depth_used) + 1,
            noise_budget_bits=min(a.noise_budget_bits, b.noise_budget_bits) - SYNTHETIC_BITS_PER_LEVEL,
            ops=a.ops + b.ops + ("mul",)
        )

    def payload_record(self, ct):
        return {"m": ct.payload[0], "nonce": ct.payload[1], "ops": list(ct.ops)}


class BfvSheBackend(SheBackend):
    """Textbook BFV with scalar plaintexts"""
    name = "bfv"
    format_tag = "she/bfv/v1"

    @staticmethod
    def ring(params):
        """(n, q, delta, relin base bits, relin digit count) for params"""
        n = RING_DEGREE[params.security_level]
        p = params.plaintext_modulus
        p_bits = p.bit_length()
        q_bits = (params.max_depth + 1) * (p_bits + 2 * n.bit_length() + 8) + p_bits + 48
        w = Config.BFV_RELIN_BASE_BITS
        return n, 1 << q_bits, (1 << q_bits) // p, w, -(-q_bits // w)

    @staticmethod
    def _polymul(a, b, q=None):
        n = len(a)
        acc = np.zeros(2 * n, dtype=object)
        for i in range(n):
            if a[i]:
                acc[i:i + n] += a[i] * b
        result = acc[:n] - acc[n:]
        return result % q if q is not None else result

    @staticmethod
    def _ternary(n, rng):
        return np.array([rng.randbelow(3) - 1 for _ in range(n)], dtype=object)

    @staticmethod
    def _error(n, rng):
        return np.array([sum(rng.getrandbits(1) - rng.getrandbits(1) for _ in range(ERROR_ETA))
                         for _ in range(n)], dtype=object)

    @staticmethod
    def _uniform(n, q, rng):
        return np.array([rng.randbelow(q) for _ in range(n)], dtype=object)

    def _budget(self, params, bound):
        n, q, delta, w, digits = self.ring(params)
        return (q // (2 * params.plaintext_modulus)).bit_length() - 1 - bound.bit_length()

    def keygen(self, params, rng):
        n, q, delta, w, digits = self.ring(params)
        s = self._ternary(n, rng)
        a = self._uniform(n, q, rng)
        b = (-(self._polymul(a, s, q) + self._error(n, rng))) % q
        s_squared = self._polymul(s, s, q)
        relin = []
        for i in range(digits):
            a_i = self._uniform(n, q, rng)
            b_i = (-(self._polymul(a_i, s, q) + self._error(n, rng)) + (1 << (w * i)) * s_squared) % q
            relin.append((b_i, a_i))
        key_id = hashlib.sha256(json.dumps([int(v) for v in b]).encode()).hexdigest()[:32]
        public = ShePublicKey(key_id=key_id, params=params, material=(b, a, tuple(relin)))
        return SheKeypair(public=public, secret=SheSecretKey(key_id=key_id, params=params, material=(s,)), params=params)

    def encrypt(self, pk, m, rng):
        params = pk.params
        n, q, delta, w, digits = self.ring(params)
        b, a, _ = pk.material
        u = self._ternary(n, rng)
        scaled = np.zeros(n, dtype=object)
        scaled[0] = delta * m
        ct0 = (self._polymul(b, u, q) + self._error(n, rng) + scaled) % q
        ct1 = (self._polymul(a, u, q) + self._error(n, rng)) % q
        bound = ERROR_ETA * (2 * n + 1)
        return SheCiphertext(public=pk, payload=(ct0, ct1), noise_bound=bound,
                             noise_budget_bits=self._budget(params, bound), ops=("enc",))

    def decrypt(self, sk, ct):
        params = sk.params
        n, q, delta, w, digits = self.ring(params)
        p = params.plaintext_modulus
        (s,) = sk.material
        ct0, ct1 = ct.payload
        x = int((ct0 + self._polymul(ct1, s, q))[0] % q)
        return ((2 * p * x + q) // (2 * q)) % p

    def _with_bound(self, ct, payload, bound, depth, op):
        budget = self._budget(ct.public.params, bound)
        if budget <= 0:
            raise NoiseBudgetExhaustedError(f"noise budget exhausted after {op} (bound {bound.bit_length()} bits)")
        return SheCiphertext(public=ct.public, payload=payload, depth_used=depth,
                             noise_bound=bound, noise_budget_bits=budget, ops=ct.ops + (op,))

    def add(self, a, b, negate_b=False):
        n, q, delta, w, digits = self.ring(a.public.params)
        sign = -1 if negate_b else 1
        payload = ((a.payload[0] + sign * b.payload[0]) % q, (a.payload[1] + sign * b.payload[1]) % q)
        bound = a.noise_bound + b.noise_bound + a.public.params.plaintext_modulus
        return self._with_bound(a, payload, bound, max(a.depth_used, b.depth_used),
                                "sub" if negate_b else "add")

    def add_plain(self, ct, m):
        n, q, delta, w, digits = self.ring(ct.public.params)
        ct0 = ct.payload[0].copy()
        ct0[0] = (ct0[0] + delta * m) % q
        bound = ct.noise_bound + ct.public.params.plaintext_modulus
        return self._with_bound(ct, (ct0, ct.payload[1]), bound, ct.depth_used, "add_plain")

    def mul_plain(self, ct, m):
        params = ct.public.params
        n, q, delta, w, digits = self.ring(params)
        k = centered(m, params.plaintext_modulus)
        payload = ((ct.payload[0] * k) % q, (ct.payload[1] * k) % q)
        bound = abs(k) * (ct.noise_bound + params.plaintext_modulus)
        return self._with_bound(ct, payload, bound, ct.depth_used, "mul_plain")

    def mul(self, a, b):
        params = a.public.params
        n, q, delta, w, digits = self.ring(params)
        p = params.plaintext_modulus

        def lift(poly):
            return np.array([centered(int(v), q) for v in poly], dtype=object)

        def rescale(poly):
            return np.array([((2 * p * int(v) + q) // (2 * q)) % q for v in poly], dtype=object)

        a0, a1 = (lift(c) for c in a.payload)
        b0, b1 = (lift(c) for c in b.payload)
        c0 = rescale(self._polymul(a0, b0))
        c1 = rescale(self._polymul(a0, b1) + self._polymul(a1, b0))
        c2 = rescale(self._polymul(a1, b1))

        _, _, relin = a.public.material
        mask = (1 << w) - 1
        for i, (rb, ra) in enumerate(relin):
            digit = np.array([(int(v) >> (w * i)) & mask for v in c2], dtype=object)
            if any(digit):
                c0 = c0 + self._polymul(digit, rb)
                c1 = c1 + self._polymul(digit, ra)

        bound = (4 * p * n * n * (a.noise_bound + b.noise_bound + p * n)
                 + digits * n * (1 << w) * ERROR_ETA)
        return self._with_bound(a, (c0 % q, c1 % q), bound, max(a.depth_used, b.depth_used) + 1, "mul")

    def payload_record(self, ct):
        return {"c0": [int(v) for v in ct.payload[0]], "c1": [int(v) for v in ct.payload[1]]}


BACKENDS = {
    "transparent": TransparentSheBackend(),
    "bfv": BfvSheBackend()
}


def _same_key(a, b):
    if a.key_id != b.key_id:
        raise KeyMismatchError(f"ciphertexts under different keys ({a.key_id[:8]} vs {b.key_id[:8]})")


def _check_plaintext(params, m):
    if not isinstance(m, int) or not 0 <= m < params.plaintext_modulus:
        raise PlaintextRangeError(f"plaintext {m!r} outside [0, {params.plaintext_modulus})")


def she_keygen(params, rng=None):
    params.validate()
    rng = rng or SeededRng(params.seed)
    return BACKENDS[params.backend].keygen(params, rng)


def she_encrypt(pk, m, rng):
    _check_plaintext(pk.params, m)
    return pk.backend.encrypt(pk, m, rng)


def she_decrypt(sk, ct):
    if sk.key_id != ct.key_id:
        raise KeyMismatchError("ciphertext was not produced under this secret key")
    if ct.noise_budget_bits <= 0 and ct.public.params.backend != "transparent":
        raise NoiseBudgetExhaustedError("ciphertext has no noise budget left")
    return ct.public.backend.decrypt(sk, ct)


def she_add(a, b):
    _same_key(a, b)
    return a.public.backend.add(a, b)


def she_sub(a, b):
    _same_key(a, b)
    return a.public.backend.add(a, b, negate_b=True)


def she_add_plain(ct, m):
    _check_plaintext(ct.public.params, m)
    return ct.public.backend.add_plain(ct, m)


def she_mul_plain(ct, m):
    _check_plaintext(ct.public.params, m)
    return ct.public.backend.mul_plain(ct, m)


def she_mul(a, b):
    _same_key(a, b)
    max_depth = a.public.params.max_depth
    if max(a.depth_used, b.depth_used) >= max_depth:
        raise DepthExhaustedError(f"multiplication would exceed max_depth={max_depth}")
    return a.public.backend.mul(a, b)


def serialize_ciphertext(ct):
    """Opaque base-16 blob prefixed by the backend format tag"""
    backend = ct.public.backend
    record = {"depth": ct.depth_used, "key": ct.key_id, **backend.payload_record(ct)}
    blob = json.dumps(record, sort_keys=True, separators=(",", ":")).encode().hex()
    return f"{backend.format_tag}:{blob}"


def key_fingerprint(pk):
    material = [pk.key_id, pk.params.backend, pk.params.plaintext_modulus, pk.params.max_depth]
    if pk.params.backend == "bfv":
        material.append([int(v) for v in pk.material[0]])
    return hashlib.sha256(json.dumps(material).encode()).hexdigest()
