import numpy as np
import pytest

from config import TestingConfig
from dgk import (dgk_combine, dgk_encrypt, dgk_is_zero, dgk_keygen, dgk_negate, dgk_rerandomize, dgk_scale,
                 dgk_xor_known, serialize_ciphertext)
from errors import KeyMismatchError, PlaintextRangeError, ValidationError
from numkit import SeededRng

U = 17


@pytest.fixture(scope="module", params=["transparent", "dgk"])
def keypair(request):
    return dgk_keygen(TestingConfig.DGK_MODULUS_BITS, U, SeededRng(21), backend=request.param,
                      v_bits=TestingConfig.DGK_V_BITS)


def test_zero_test_basic(keypair, rng):
    assert dgk_is_zero(keypair.secret, dgk_encrypt(keypair.public, 0, rng))
    assert not dgk_is_zero(keypair.secret, dgk_encrypt(keypair.public, 1, rng))


def test_zero_test_random_plaintexts(keypair, rng):
    for _ in range(1000):
        m = rng.randbelow(U)
        assert dgk_is_zero(keypair.secret, dgk_encrypt(keypair.public, m, rng)) == (m == 0)


def test_combine_matches_addition(keypair, rng):
    one = dgk_encrypt(keypair.public, 1, rng)
    assert dgk_is_zero(keypair.secret, dgk_combine(one, dgk_encrypt(keypair.public, U - 1, rng)))
    for _ in range(1000):
        a, b = rng.randbelow(U), rng.randbelow(U)
        c = dgk_combine(dgk_encrypt(keypair.public, a, rng), dgk_encrypt(keypair.public, b, rng))
        assert dgk_is_zero(keypair.secret, c) == ((a + b) % U == 0)


def test_scale_and_negate(keypair, rng):
    ct = dgk_encrypt(keypair.public, 5, rng)
    assert dgk_is_zero(keypair.secret, dgk_combine(ct, dgk_negate(ct)))
    assert dgk_is_zero(keypair.secret, dgk_combine(dgk_scale(ct, 3), dgk_encrypt(keypair.public, 2, rng)))
    with pytest.raises(ValidationError):
        dgk_scale(ct, 0)


@pytest.mark.parametrize("b, known", [(0, 0), (0, 1), (1, 0), (1, 1)])
def test_xor_with_known_bit(keypair, rng, b, known):
    ct = dgk_xor_known(dgk_encrypt(keypair.public, b, rng), known, rng)
    assert dgk_is_zero(keypair.secret, ct) == ((b ^ known) == 0)


def test_reencryption_differs(keypair, rng):
    a = dgk_encrypt(keypair.public, 1, rng)
    b = dgk_encrypt(keypair.public, 1, rng)
    assert serialize_ciphertext(a) != serialize_ciphertext(b)
    assert serialize_ciphertext(dgk_rerandomize(a, rng)) != serialize_ciphertext(a)


def test_plaintext_range(keypair, rng):
    with pytest.raises(PlaintextRangeError):
        dgk_encrypt(keypair.public, U, rng)


def test_key_mismatch(keypair, rng):
    other = dgk_keygen(TestingConfig.DGK_MODULUS_BITS, U, SeededRng(22), backend=keypair.public.backend,
                       v_bits=TestingConfig.DGK_V_BITS)
    with pytest.raises(KeyMismatchError):
        dgk_combine(dgk_encrypt(keypair.public, 1, rng), dgk_encrypt(other.public, 1, rng))
    with pytest.raises(KeyMismatchError):
        dgk_is_zero(other.secret, dgk_encrypt(keypair.public, 0, rng))


@pytest.mark.parametrize("bits, u, field", [(128, U, "bits"), (256, 15, "u"), (256, 1, "u")])
def test_keygen_validation(bits, u, field):
    with pytest.raises(ValidationError) as info:
        dgk_keygen(bits, u, SeededRng(1))
    assert info.value.field == field


def test_real_key_structure():
    kp = dgk_keygen(256, U, SeededRng(3), backend="dgk", v_bits=32)
    p, v_p = kp.secret.p, kp.secret.v_p
    assert (p - 1) % (U * v_p) == 0
    assert kp.public.n_pub % p == 0
    assert kp.public.n_pub.bit_length() >= 250


def test_combine_is_associative(keypair, rng):
    for _ in range(30):
        plain = [rng.randbelow(U) for _ in range(3)]
        a, b, c = (dgk_encrypt(keypair.public, m, rng) for m in plain)
        left = dgk_combine(dgk_combine(a, b), c)
        right = dgk_combine(a, dgk_combine(b, c))
        assert serialize_ciphertext(left) == serialize_ciphertext(right)
        cancel = dgk_encrypt(keypair.public, -sum(plain) % U, rng)
        assert dgk_is_zero(keypair.secret, dgk_combine(left, cancel))


def test_scale_preserves_zero_for_every_unit(keypair, rng):
    for m in range(U):
        ct = dgk_encrypt(keypair.public, m, rng)
        for xi in range(1, U):
            assert dgk_is_zero(keypair.secret, dgk_scale(ct, xi)) == (m == 0)


def test_blinded_nonzero_values_are_uniform():
    kp = dgk_keygen(TestingConfig.DGK_MODULUS_BITS, U, SeededRng(23), backend="transparent")
    rng = SeededRng(24)
    counts = np.zeros(U, dtype=np.int64)
    samples = 8000
    for _ in range(samples):
        ct = dgk_encrypt(kp.public, 1 + rng.randbelow(U - 1), rng)
        blinded = dgk_rerandomize(dgk_scale(ct, rng.randint(1, U - 1)), rng)
        counts[blinded.payload] += 1
    assert counts[0] == 0
    expected = samples / (U - 1)
    chi_square = float(((counts[1:] - expected) ** 2 / expected).sum())
    # 15 degrees of freedom, 0.1% upper tail
    assert chi_square < 37.7
