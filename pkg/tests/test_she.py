import pytest

from errors import DepthExhaustedError, KeyMismatchError, PlaintextRangeError, ValidationError
from numkit import SeededRng, next_prime
from she import (SheParams, decode_signed, encode_signed, key_fingerprint, serialize_ciphertext, she_add,
                 she_add_plain, she_decrypt, she_encrypt, she_keygen, she_mul, she_mul_plain, she_sub)

P = next_prime(2**60)


@pytest.fixture(scope="module", params=["transparent", "bfv"])
def keypair(request):
    return she_keygen(SheParams(plaintext_modulus=P, backend=request.param, seed=17), SeededRng(17))


def enc(keypair, value, rng):
    return she_encrypt(keypair.public, encode_signed(value, P), rng)


def dec(keypair, ct):
    return decode_signed(she_decrypt(keypair.secret, ct), P)


@pytest.mark.parametrize("value", [0, 1, 12345, -7, P // 2, -(P // 2)])
def test_encrypt_decrypt(keypair, rng, value):
    assert dec(keypair, enc(keypair, value, rng)) == value


def test_add_sub(keypair, rng):
    a, b = enc(keypair, 41, rng), enc(keypair, 100, rng)
    assert dec(keypair, she_add(a, b)) == 141
    assert dec(keypair, she_sub(a, b)) == -59


def test_plain_ops(keypair, rng):
    a = enc(keypair, -6, rng)
    assert dec(keypair, she_add_plain(a, 10)) == 4
    assert dec(keypair, she_mul_plain(a, 35)) == -210
    assert dec(keypair, she_mul_plain(a, encode_signed(-2, P))) == 12


def test_squared_distance_circuit(keypair, rng):
    tx, ty = enc(keypair, 3, rng), enc(keypair, 4, rng)
    dx = she_sub(tx, enc(keypair, 10, rng))
    dy = she_sub(ty, enc(keypair, 0, rng))
    d = she_add(she_mul(dx, dx), she_mul(dy, dy))
    assert dec(keypair, d) == 65
    assert d.depth_used == 1


def test_depth_two_then_exhausted(keypair, rng):
    x = enc(keypair, 5, rng)
    sq = she_mul(x, x)
    quad = she_mul(sq, enc(keypair, -3, rng))
    assert dec(keypair, quad) == -75
    assert quad.depth_used == 2
    assert quad.noise_budget_bits > 0
    with pytest.raises(DepthExhaustedError):
        she_mul(quad, x)


def test_fresh_encryptions_differ(keypair, rng):
    a, b = enc(keypair, 9, rng), enc(keypair, 9, rng)
    assert serialize_ciphertext(a) != serialize_ciphertext(b)
    assert serialize_ciphertext(a).startswith("she/")


def test_plaintext_range(keypair, rng):
    with pytest.raises(PlaintextRangeError):
        she_encrypt(keypair.public, P, rng)
    with pytest.raises(PlaintextRangeError):
        she_encrypt(keypair.public, -1, rng)


def test_key_mismatch(keypair, rng):
    other = she_keygen(SheParams(plaintext_modulus=P, backend=keypair.params.backend, seed=18), SeededRng(18))
    a = enc(keypair, 1, rng)
    b = she_encrypt(other.public, 1, rng)
    with pytest.raises(KeyMismatchError):
        she_add(a, b)
    with pytest.raises(KeyMismatchError):
        she_decrypt(other.secret, a)


def test_keygen_is_deterministic():
    params = SheParams(plaintext_modulus=P, backend="bfv", seed=5)
    a = she_keygen(params, SeededRng(5))
    b = she_keygen(params, SeededRng(5))
    assert key_fingerprint(a.public) == key_fingerprint(b.public)


@pytest.mark.parametrize("kwargs, field", [
    ({"plaintext_modulus": 15}, "plaintext_modulus"),
    ({"plaintext_modulus": 2}, "plaintext_modulus"),
    ({"plaintext_modulus": P, "security_level": "huge"}, "security_level"),
    ({"plaintext_modulus": P, "max_depth": 1}, "max_depth"),
    ({"plaintext_modulus": P, "backend": "ckks"}, "she_backend"),
])
def test_params_validation(kwargs, field):
    with pytest.raises(ValidationError) as info:
        SheParams(**kwargs).validate()
    assert info.value.field == field


def test_prime_power_modulus_accepted():
    assert SheParams(plaintext_modulus=3**5).validate()


def test_encode_signed_range():
    with pytest.raises(PlaintextRangeError):
        encode_signed(P // 2 + 1, P)


def test_mul_consumes_noise_budget(keypair, rng):
    x = enc(keypair, 7, rng)
    sq = she_mul(x, x)
    cube = she_mul(sq, enc(keypair, 2, rng))
    assert x.noise_budget_bits > sq.noise_budget_bits > cube.noise_budget_bits > 0


@pytest.mark.parametrize("backend", ["transparent", pytest.param("bfv", marks=pytest.mark.slow)])
def test_random_add_sub_against_plaintext(backend):
    kp = she_keygen(SheParams(plaintext_modulus=P, backend=backend, seed=21), SeededRng(21))
    rng = SeededRng(22)
    bound = 2**40
    for _ in range(1000):
        a, b = rng.randint(-bound, bound), rng.randint(-bound, bound)
        ca, cb = enc(kp, a, rng), enc(kp, b, rng)
        assert dec(kp, she_add(ca, cb)) == a + b
        assert dec(kp, she_sub(ca, cb)) == a - b


def test_backends_agree_on_one_circuit():
    keypairs = [she_keygen(SheParams(plaintext_modulus=P, backend=name, seed=31), SeededRng(31))
                for name in ("transparent", "bfv")]
    results = []
    for kp in keypairs:
        rng = SeededRng(32)
        tx, ty = she_add(enc(kp, 3, rng), enc(kp, -8, rng)), she_add(enc(kp, 11, rng), enc(kp, 2, rng))
        dx = she_sub(tx, enc(kp, 40, rng))
        dy = she_sub(ty, enc(kp, -6, rng))
        d = she_add_plain(she_add(she_mul(dx, dx), she_mul(dy, dy)), 5)
        w = she_sub(she_mul_plain(d, 3), enc(kp, 1000, rng))
        results.append((dec(kp, w), w.depth_used))
    assert results[0] == results[1]
    assert results[0][0] == 3 * ((3 - 8 - 40) ** 2 + (11 + 2 + 6) ** 2 + 5) - 1000
