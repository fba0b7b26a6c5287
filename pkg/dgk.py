"""DGK-style additively homomorphic encryption over a small prime plaintext space.

Only the decryption-time zero test is exposed. The ``dgk`` backend is the
classic construction: n = p*q with u*v_p | p-1 and u*v_q | q-1, g of order
u*v_p*v_q, h of order v_p*v_q, E(m) = g^m * h^r mod n, and
c^v_p mod p == 1 exactly when m == 0 mod u. The ``transparent`` backend
records the plaintext residue for fast seeded trials.
"""
import json
from dataclasses import dataclass

import gmpy2

from config import Config
from errors import KeyMismatchError, PlaintextRangeError, ValidationError
from numkit import is_prime
from monitoring import monitoring

BACKENDS = ("transparent", "dgk")
FORMAT_TAGS = {"transparent": "dgk/transparent/v1", "dgk": "dgk/real/v1"}


@dataclass(frozen=True)
class DgkPublicKey:
    key_id: str
    backend: str
    u: int
    n_pub: int = 0
    g: int = 0
    h: int = 0
    r_bits: int = 0


@dataclass(frozen=True)
class DgkSecretKey:
    key_id: str
    backend: str
    u: int
    p: int = 0
    v_p: int = 0


@dataclass(frozen=True)
class DgkKeypair:
    public: DgkPublicKey
    secret: DgkSecretKey

    @property
    def u(self):
        return self.public.u


@dataclass(frozen=True)
class DgkCiphertext:
    public: DgkPublicKey
    payload: int
    nonce: int = 0

    @property
    def key_id(self):
        return self.public.key_id


def _random_prime(bits, rng):
    while True:
        candidate = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if is_prime(candidate):
            return candidate


def _prime_with_order(half_bits, u, v, rng):
    """Prime p with u*v | p - 1 and bit length half_bits"""
    base = 2 * u * v
    k_bits = half_bits - base.bit_length()
    if k_bits < 2:
        raise ValidationError("bits", "modulus too small for the requested u and v sizes")
    while True:
        k = rng.getrandbits(k_bits) | (1 << (k_bits - 1))
        candidate = base * k + 1
        if is_prime(candidate):
            return candidate


def _element_of_order(prime, factors, rng):
    """Element of Z_prime^* whose order is exactly prod(factors) (distinct primes)"""
    order = 1
    for f in factors:
        order *= f
    cofactor = (prime - 1) // order
    while True:
        x = rng.randbelow(prime - 3) + 2
        y = int(gmpy2.powmod(x, cofactor, prime))
        if all(gmpy2.powmod(y, order // f, prime) != 1 for f in factors):
            return y


def _crt(a_p, p, a_q, q):
    n = p * q
    return (a_p * q * int(gmpy2.invert(q, p)) + a_q * p * int(gmpy2.invert(p, q))) % n


def dgk_keygen(bits, u, rng, backend=None, v_bits=None):
    """DGK keypair with plaintext space Z_u"""
    backend = backend or Config.DGK_BACKEND
    if backend not in BACKENDS:
        raise ValidationError("dgk_backend", f"must be one of {BACKENDS}")
    if bits < 256:
        raise ValidationError("bits", f"DGK modulus must have >= 256 bits, got {bits}")
    if not isinstance(u, int) or not is_prime(u):
        raise ValidationError("u", f"plaintext space size must be prime, got {u!r}")

    key_id = rng.random_bytes(16).hex()
    if backend == "transparent":
        return DgkKeypair(public=DgkPublicKey(key_id=key_id, backend=backend, u=u),
                          secret=DgkSecretKey(key_id=key_id, backend=backend, u=u))

    v_bits = v_bits or Config.DGK_V_BITS
    half = bits // 2
    v_p = _random_prime(v_bits, rng)
    v_q = _random_prime(v_bits, rng)
    while v_q == v_p:
        v_q = _random_prime(v_bits, rng)
    p = _prime_with_order(half, u, v_p, rng)
    q = _prime_with_order(bits - half, u, v_q, rng)
    while q == p:
        q = _prime_with_order(bits - half, u, v_q, rng)

    g = _crt(_element_of_order(p, (u, v_p), rng), p, _element_of_order(q, (u, v_q), rng), q)
    h = _crt(_element_of_order(p, (v_p,), rng), p, _element_of_order(q, (v_q,), rng), q)
    monitoring.logger.debug(f"DGK keygen: {bits}-bit modulus, u={u}, v={v_bits} bits")
    public = DgkPublicKey(key_id=key_id, backend=backend, u=u, n_pub=p * q, g=g, h=h,
                          r_bits=(5 * v_bits) // 2)
    return DgkKeypair(public=public, secret=DgkSecretKey(key_id=key_id, backend=backend, u=u, p=p, v_p=v_p))


def dgk_encrypt(pk, m, rng):
    if not isinstance(m, int) or not 0 <= m < pk.u:
        raise PlaintextRangeError(f"DGK plaintext {m!r} outside [0, {pk.u})")
    if pk.backend == "transparent":
        return DgkCiphertext(public=pk, payload=m, nonce=rng.getrandbits(64))
    r = rng.getrandbits(pk.r_bits)
    c = gmpy2.powmod(pk.g, m, pk.n_pub) * gmpy2.powmod(pk.h, r, pk.n_pub) % pk.n_pub
    return DgkCiphertext(public=pk, payload=int(c))


def dgk_combine(a, b):
    """Plaintext addition mod u"""
    if a.key_id != b.key_id:
        raise KeyMismatchError("DGK ciphertexts under different keys")
    pk = a.public
    if pk.backend == "transparent":
        return DgkCiphertext(public=pk, payload=(a.payload + b.payload) % pk.u, nonce=a.nonce ^ b.nonce)
    return DgkCiphertext(public=pk, payload=a.payload * b.payload % pk.n_pub)


def dgk_scale(ct, s):
    """Plaintext multiplication by a known scalar s >= 1"""
    if s < 1:
        raise ValidationError("s", "DGK scale factor must be >= 1")
    pk = ct.public
    if pk.backend == "transparent":
        return DgkCiphertext(public=pk, payload=ct.payload * s % pk.u, nonce=ct.nonce)
    return DgkCiphertext(public=pk, payload=int(gmpy2.powmod(ct.payload, s, pk.n_pub)))


def dgk_negate(ct):
    return dgk_scale(ct, ct.public.u - 1)


def dgk_xor_known(ct, known_bit, rng):
    """E(b XOR known_bit) from E(b) and a plaintext bit"""
    if known_bit == 0:
        return ct
    return dgk_combine(dgk_encrypt(ct.public, 1, rng), dgk_negate(ct))


def dgk_rerandomize(ct, rng):
    return dgk_combine(ct, dgk_encrypt(ct.public, 0, rng))


def dgk_is_zero(sk, ct):
    if sk.key_id != ct.key_id:
        raise KeyMismatchError("DGK ciphertext was not produced under this secret key")
    if sk.backend == "transparent":
        return ct.payload % sk.u == 0
    return gmpy2.powmod(ct.payload, sk.v_p, sk.p) == 1


def serialize_ciphertext(ct):
    if ct.public.backend == "transparent":
        blob = json.dumps({"m": ct.payload, "nonce": ct.nonce}, sort_keys=True).encode().hex()
    else:
        blob = format(ct.payload, "x")
    return f"{FORMAT_TAGS[ct.public.backend]}:{blob}"
