"""Protocol entities (CA, user, edge node, location server) and the full query flow.

Coordinates are kept in integers: the edge node computes T = t * (virtual
location) and the location server scales POI coordinates by t, so every squared
distance is t^2 times the true one and comparisons are unaffected.
"""
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum

from Crypto.Cipher import AES

from config import Config
from dgk import dgk_combine, dgk_encrypt, dgk_is_zero, dgk_keygen, dgk_rerandomize, dgk_scale, dgk_xor_known
from dgk import serialize_ciphertext as serialize_dgk
from errors import SealError, ValidationError
from message_log import MessageLog
from monitoring import monitoring
from numkit import SeededRng, U64, bit, mod_reduce, next_prime, rand_bits, to_bits
from she import (SheParams, decode_signed, encode_signed, key_fingerprint, she_add, she_decrypt,
                 she_encrypt, she_keygen, she_mul, she_sub)
from she import serialize_ciphertext as serialize_she

TRANSCRIPT_FORMAT = "lbsaudit.transcript/1"


def comparison_bits(m):
    """Smallest l with 2^l > m"""
    return max(1, m.bit_length())


def she_modulus_for(m, k_sec, mask_range=1):
    """Prime plaintext modulus holding w = z + rho and every masked difference"""
    exponent = max(k_sec + comparison_bits(m) + 4, (m * mask_range).bit_length() + 2)
    return next_prime(1 << exponent)


def dgk_space_for(l):
    """Prime u large enough that no c_j wraps around"""
    return next_prime(max(3 * l + 4, 7) - 1)


class ComparisonMode(str, Enum):
    ORACLE = "oracle"
    FAITHFUL = "faithful"
    MASKED = "masked"


class Entity(str, Enum):
    CA = "CA"
    USER = "USER"
    EDGE_NODE = "EN"
    LBS = "LBS"


@dataclass(frozen=True)
class GridPoint:
    x: int
    y: int

    @classmethod
    def parse(cls, value, field_name):
        if (not isinstance(value, (list, tuple)) or len(value) != 2
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
            raise ValidationError(field_name, f"expected an [x, y] pair of integers, got {value!r}")
        return cls(value[0], value[1])

    def squared_distance(self, other):
        return (self.x - other.x) ** 2 + (self.y - other.y) ** 2

    def to_list(self):
        return [self.x, self.y]


@dataclass(frozen=True)
class ScenarioConfig:
    user_location: GridPoint
    pois: tuple
    t: int
    world_diameter: int
    history: tuple = ()
    k_sec: int = 40
    k_nn: int = 1
    seed: int = 0
    mode: str = ComparisonMode.ORACLE.value
    mask_range: int = 10**6
    random_history: bool = False
    leak_z: bool = False
    signed_mask: bool = False
    query_text: str = "nearest services"
    she_backend: str = None
    dgk_backend: str = None

    @classmethod
    def from_dict(cls, data):
        """Build and validate a scenario from a parsed JSON object"""
        if not isinstance(data, dict):
            raise ValidationError("scenario", "must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(unknown[0], "unknown field")
        for name in ("user_location", "pois", "t", "world_diameter"):
            if name not in data:
                raise ValidationError(name, "required field is missing")

        values = dict(data)
        values["user_location"] = GridPoint.parse(data["user_location"], "user_location")
        for name in ("pois", "history"):
            raw = data.get(name, [])
            if not isinstance(raw, list):
                raise ValidationError(name, "must be a list of [x, y] pairs")
            values[name] = tuple(GridPoint.parse(p, f"{name}[{i}]") for i, p in enumerate(raw))
        return cls(**values).validate()

    def validate(self):
        for name in ("t", "world_diameter", "k_sec", "k_nn", "seed", "mask_range"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ValidationError(name, f"must be an integer, got {value!r}")
        for name in ("random_history", "leak_z", "signed_mask"):
            if not isinstance(getattr(self, name), bool):
                raise ValidationError(name, "must be true or false")
        if not isinstance(self.query_text, str):
            raise ValidationError("query_text", "must be a string")

        if self.mode not in {m.value for m in ComparisonMode}:
            raise ValidationError("mode", f"must be one of oracle, faithful, masked; got {self.mode!r}")
        if self.t < 2:
            raise ValidationError("t", "moving-average window must be >= 2")
        if len(self.pois) < 3:
            raise ValidationError("pois", f"at least 3 POIs are required, got {len(self.pois)}")
        if self.world_diameter < 1:
            raise ValidationError("world_diameter", "must be >= 1")
        if self.k_sec < 1:
            raise ValidationError("k_sec", "must be >= 1")
        if not 1 <= self.k_nn <= len(self.pois):
            raise ValidationError("k_nn", f"must be in [1, {len(self.pois)}]")
        if not 0 <= self.seed < U64:
            raise ValidationError("seed", "must be an unsigned 64-bit integer")
        if self.mask_range < 1:
            raise ValidationError("mask_range", "must be >= 1")
        if self.leak_z and self.mode != ComparisonMode.FAITHFUL.value:
            raise ValidationError("leak_z", "only meaningful in faithful mode")
        if self.signed_mask and self.mode != ComparisonMode.MASKED.value:
            raise ValidationError("signed_mask", "only meaningful in masked mode")

        if self.random_history:
            if self.history:
                raise ValidationError("history", "must be empty when random_history is set")
        elif len(self.history) != self.t - 1:
            raise ValidationError("history", f"expected t - 1 = {self.t - 1} points, got {len(self.history)}")

        bound = self.world_diameter
        named = [("user_location", self.user_location)]
        named += [(f"pois[{i}]", p) for i, p in enumerate(self.pois)]
        named += [(f"history[{i}]", p) for i, p in enumerate(self.history)]
        for name, point in named:
            if abs(point.x) > bound or abs(point.y) > bound:
                raise ValidationError(name, f"coordinates exceed world bound {bound}")
        for i, (name_a, a) in enumerate(named):
            for name_b, b in named[i + 1:]:
                if a.squared_distance(b) > bound * bound:
                    raise ValidationError(name_b, f"farther than world_diameter {bound} from {name_a}")
        return self

    def with_overrides(self, **overrides):
        changes = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **changes).validate() if changes else self

    @property
    def n(self):
        return len(self.pois)

    @property
    def m(self):
        """Bound on every scaled squared distance"""
        return (self.t * self.world_diameter) ** 2

    @property
    def l(self):
        return comparison_bits(self.m)

    @property
    def she_modulus(self):
        return she_modulus_for(self.m, self.k_sec, self.mask_range)

    @property
    def dgk_u(self):
        return dgk_space_for(self.l)

    def to_dict(self):
        data = asdict(self)
        data["user_location"] = self.user_location.to_list()
        data["pois"] = [p.to_list() for p in self.pois]
        data["history"] = [p.to_list() for p in self.history]
        return data


@dataclass
class KeyRing:
    she: object
    dgk: object
    seal_key: bytes
    holders: dict
    fingerprints: dict


@dataclass
class UserQuery:
    sealed_query: dict
    ct_x: object
    ct_y: object


@dataclass
class ComparisonTranscript:
    pair: tuple
    d_a: int
    d_b: int
    z: int
    decision: bool
    truth: bool
    rho: int = None
    w: int = None
    w_bar: int = None
    rho_bar: int = None
    epsilon: int = None
    xi: list = field(default_factory=list)
    c_plain: list = None
    flawed_decision: bool = None
    mask_r: int = None

    def to_dict(self):
        data = asdict(self)
        data["pair"] = list(self.pair)
        return data


@dataclass
class BlindedBits:
    ciphertexts: list
    xi: list


@dataclass
class QueryResponse:
    indices: list
    points: list
    wins: list
    sealed: dict

    def to_dict(self):
        return asdict(self)


@dataclass
class Transcript:
    config: ScenarioConfig
    messages: list
    comparisons: list
    response: QueryResponse
    lbs_view: dict
    sidecar: dict
    fingerprints: dict

    def to_dict(self):
        return {
            "format_version": TRANSCRIPT_FORMAT,
            "config": self.config.to_dict(),
            "derived": {"m": self.config.m, "l": self.config.l,
                        "she_modulus": self.config.she_modulus, "dgk_u": self.config.dgk_u},
            "key_fingerprints": self.fingerprints,
            "messages": self.messages,
            "comparisons": [c.to_dict() for c in self.comparisons],
            "response": self.response.to_dict(),
            "lbs_view": self.lbs_view,
            "sidecar": self.sidecar
        }


def seal(key, payload, rng):
    """AES-GCM envelope for the user <-> server channel; the nonce comes from the run rng"""
    nonce = rng.random_bytes(12)
    cipher = AES.new(key, AES.MODE_GCM, nonce=nonce)
    body, tag = cipher.encrypt_and_digest(json.dumps(payload, sort_keys=True).encode())
    return {"nonce": nonce.hex(), "body": body.hex(), "tag": tag.hex()}


def unseal(key, envelope):
    try:
        nonce = bytes.fromhex(envelope["nonce"])
        body = bytes.fromhex(envelope["body"])
        tag = bytes.fromhex(envelope["tag"])
    except (KeyError, TypeError, ValueError) as e:
        raise SealError(f"malformed envelope: {e}")
    try:
        plain = AES.new(key, AES.MODE_GCM, nonce=nonce).decrypt_and_verify(body, tag)
    except ValueError:
        raise SealError("envelope authentication failed")
    return json.loads(plain)


def _blob(serialized, settings):
    """Ciphertext as recorded in a transcript message"""
    if settings.TRANSCRIPT_CIPHERTEXTS == "digest":
        return hashlib.sha256(serialized.encode()).hexdigest()[:16]
    return serialized


def comparison_chain(w_bar_bits, rho_bar_bits, epsilon):
    """Unreduced c_j values, most significant bit first"""
    if len(w_bar_bits) != len(rho_bar_bits):
        raise ValidationError("bits", f"length mismatch {len(w_bar_bits)} vs {len(rho_bar_bits)}")
    chain = []
    xor_sum = 0
    for w_j, r_j in zip(w_bar_bits, rho_bar_bits):
        chain.append(w_j - r_j + epsilon + 3 * xor_sum)
        xor_sum += w_j ^ r_j
    return chain


def brute_force_knn(distances, k_nn):
    return sorted(range(len(distances)), key=lambda i: (distances[i], i))[:k_nn]


def ca_setup(config, rng, settings=None):
    """Generate the SHE keypair, the DGK keypair and the sealing key"""
    settings = settings or Config
    started = time.perf_counter()
    params = SheParams(
        plaintext_modulus=config.she_modulus,
        security_level=settings.SHE_SECURITY_LEVEL,
        max_depth=settings.SHE_MAX_DEPTH,
        seed=config.seed,
        backend=config.she_backend or settings.SHE_BACKEND
    )
    she = she_keygen(params, rng)
    dgk = dgk_keygen(settings.DGK_MODULUS_BITS, config.dgk_u, rng,
                     backend=config.dgk_backend or settings.DGK_BACKEND, v_bits=settings.DGK_V_BITS)
    seal_key = rng.random_bytes(32)

    holders = {
        "she_public": [Entity.USER.value, Entity.EDGE_NODE.value, Entity.LBS.value],
        "she_secret": [Entity.LBS.value],
        "dgk_public": [Entity.EDGE_NODE.value, Entity.LBS.value],
        "dgk_secret": [Entity.LBS.value],
        "seal_key": [Entity.USER.value, Entity.LBS.value]
    }
    fingerprints = {
        "she": key_fingerprint(she.public),
        "dgk": hashlib.sha256(f"{dgk.public.key_id}:{dgk.public.n_pub}:{dgk.u}".encode()).hexdigest(),
        "seal": hashlib.sha256(seal_key).hexdigest()
    }
    monitoring.track_stage("ca_setup", (time.perf_counter() - started) * 1000, {
        "she_backend": params.backend, "p_bits": params.plaintext_modulus.bit_length(), "u": dgk.u
    })
    return KeyRing(she=she, dgk=dgk, seal_key=seal_key, holders=holders, fingerprints=fingerprints)


def _encrypt_signed(keys, value, rng):
    p = keys.she.params.plaintext_modulus
    return she_encrypt(keys.she.public, encode_signed(value, p), rng)


def user_create_query(location, query_text, keys, rng, world_bound=None):
    if world_bound is not None and (abs(location.x) > world_bound or abs(location.y) > world_bound):
        raise ValidationError("user_location", f"coordinates exceed world bound {world_bound}")
    sealed = seal(keys.seal_key, {"query": query_text}, rng)
    return UserQuery(sealed_query=sealed,
                     ct_x=_encrypt_signed(keys, location.x, rng),
                     ct_y=_encrypt_signed(keys, location.y, rng))


def en_virtual_location(ct_x, ct_y, history, t):
    """(T_x, T_y) = t-scaled virtual location, from the query and t - 1 encrypted history points"""
    if t < 2:
        raise ValidationError("t", "moving-average window must be >= 2")
    if len(history) != t - 1:
        raise ValidationError("history", f"expected {t - 1} encrypted points, got {len(history)}")
    total_x, total_y = ct_x, ct_y
    for hx, hy in history:
        total_x = she_add(total_x, hx)
        total_y = she_add(total_y, hy)
    return total_x, total_y


def en_compute_distances(ct_tx, ct_ty, poi_ciphertexts):
    """Encrypted (T_x - t*x_i)^2 + (T_y - t*y_i)^2 for every POI"""
    distances = []
    for cx, cy in poi_ciphertexts:
        dx = she_sub(ct_tx, cx)
        dy = she_sub(ct_ty, cy)
        distances.append(she_add(she_mul(dx, dx), she_mul(dy, dy)))
    return distances


def en_compare_prepare(keys, ct_da, ct_db, l, k_sec, rng, m=None):
    """(E(w), rho) with w = 2^l + d_a - d_b + rho"""
    if m is not None and (1 << l) <= m:
        raise ValidationError("l", f"2^{l} does not exceed the distance bound m={m}")
    pk = keys.she.public
    ct_z = she_sub(she_add(she_encrypt(pk, 1 << l, rng), ct_da), ct_db)
    rho = rand_bits(rng, k_sec + l + 1)
    ct_w = she_add(ct_z, she_encrypt(pk, rho, rng))
    return ct_w, rho, ct_z


def lbs_reduce_w(ct_w, keys, l, rng):
    """(DGK encryptions of the bits of w mod 2^l, most significant first; the decrypted w)"""
    w = she_decrypt(keys.she.secret, ct_w)
    w_bar = mod_reduce(w, l)
    return [dgk_encrypt(keys.dgk.public, b, rng) for b in to_bits(w_bar, l)], w


def en_dgk_combine(bits, rho_bar_bits, epsilon, rng):
    """Blinded, shuffled E(c_j) from E(w_bar_j) and the plaintext bits of rho_bar"""
    if len(bits) != len(rho_bar_bits):
        raise ValidationError("bits", f"length mismatch {len(bits)} vs {len(rho_bar_bits)}")
    if epsilon not in (-1, 1):
        raise ValidationError("epsilon", "must be -1 or +1")
    if not bits:
        return BlindedBits(ciphertexts=[], xi=[])
    pk = bits[0].public
    u = pk.u

    blinded = []
    xis = []
    xor_acc = None
    for ct_w, r_j in zip(bits, rho_bar_bits):
        c = dgk_combine(ct_w, dgk_encrypt(pk, (epsilon - r_j) % u, rng))
        if xor_acc is not None:
            c = dgk_combine(c, dgk_scale(xor_acc, 3))
        xor_j = dgk_xor_known(ct_w, r_j, rng)
        xor_acc = xor_j if xor_acc is None else dgk_combine(xor_acc, xor_j)

        xi = rng.randint(1, u - 1)
        blinded.append(dgk_rerandomize(dgk_scale(c, xi), rng))
        xis.append(xi)

    order = list(range(len(blinded)))
    rng.shuffle(order)
    return BlindedBits(ciphertexts=[blinded[i] for i in order], xi=[xis[i] for i in order])


def lbs_decide(blinded, dgk_secret):
    """True ("d_a >= d_b") iff some blinded value decrypts to zero"""
    ciphertexts = blinded.ciphertexts if isinstance(blinded, BlindedBits) else blinded
    return any(dgk_is_zero(dgk_secret, ct) for ct in ciphertexts)


def lbs_rank_and_respond(decisions, pois, k_nn, keys=None, rng=None):
    """Copeland ranking: b beats a when (a, b) decides d_a >= d_b; ties by index"""
    n = len(pois)
    if not 1 <= k_nn <= n:
        raise ValidationError("k_nn", f"must be in [1, {n}]")
    wins = [0] * n
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in decisions:
                raise ValidationError("decisions", f"missing decision for pair ({a}, {b})")
            if decisions[(a, b)]:
                wins[b] += 1
            else:
                wins[a] += 1
    order = sorted(range(n), key=lambda i: (-wins[i], i))[:k_nn]
    points = [pois[i].to_list() for i in order]
    sealed = seal(keys.seal_key, {"indices": order, "points": points}, rng) if keys is not None else {}
    return QueryResponse(indices=order, points=points, wins=wins, sealed=sealed)


def en_mask_difference(keys, ct_da, ct_db, rng, mask_range, signed=False):
    """(E((d_a - d_b) * R), R) with R uniform in [1, mask_range], optionally of random sign"""
    if mask_range < 1:
        raise ValidationError("mask_range", "must be >= 1")
    r = rng.randint(1, mask_range)
    if signed and rng.getrandbits(1):
        r = -r
    ct_r = _encrypt_signed(keys, r, rng)
    return she_mul(she_sub(ct_da, ct_db), ct_r), r


def _random_history(config, rng, max_attempts=10_000):
    """t - 1 points drawn near the user that keep the world bound intact"""
    bound = config.world_diameter
    spread = max(1, bound // 4)
    anchors = [config.user_location, *config.pois]
    history = []
    for _ in range(config.t - 1):
        point = config.user_location
        for _ in range(max_attempts):
            candidate = GridPoint(config.user_location.x + rng.randint(-spread, spread),
                                  config.user_location.y + rng.randint(-spread, spread))
            if abs(candidate.x) > bound or abs(candidate.y) > bound:
                continue
            if all(candidate.squared_distance(a) <= bound * bound for a in anchors + history):
                point = candidate
                break
        history.append(point)
    return tuple(history)


def run_full_query(config, settings=None):
    """Run one query end to end and return the full transcript"""
    config.validate()
    settings = settings or Config
    started = time.perf_counter()
    master = SeededRng(config.seed)
    key_rng, history_rng, rng = master.spawn(0), master.spawn(1), master.spawn(2)
    log = MessageLog()
    mode = ComparisonMode(config.mode)
    t, l = config.t, config.l
    p = config.she_modulus

    keys = ca_setup(config, key_rng, settings)
    for holder in (Entity.USER, Entity.EDGE_NODE, Entity.LBS):
        log.log_message("key_distribution", Entity.CA.value, holder.value, {
            "she": keys.fingerprints["she"],
            "dgk": keys.fingerprints["dgk"] if holder != Entity.USER else None,
            "holds_secret": holder == Entity.LBS
        })

    history = _random_history(config, history_rng) if config.random_history else config.history
    history_cts = [(_encrypt_signed(keys, h.x, rng), _encrypt_signed(keys, h.y, rng)) for h in history]
    log.log_message("history_bootstrap", Entity.USER.value, Entity.EDGE_NODE.value, {
        "points": len(history_cts), "source": "random" if config.random_history else "configured"
    })

    query = user_create_query(config.user_location, config.query_text, keys, rng, config.world_diameter)
    log.log_message("user_query", Entity.USER.value, Entity.EDGE_NODE.value, {
        "x": _blob(serialize_she(query.ct_x), settings), "y": _blob(serialize_she(query.ct_y), settings)
    })
    log.log_message("query_relay", Entity.EDGE_NODE.value, Entity.LBS.value, {"sealed_tag": query.sealed_query["tag"]})
    relayed = unseal(keys.seal_key, query.sealed_query)
    monitoring.logger.debug(f"LBS received query: {relayed['query']}")

    poi_cts = [(_encrypt_signed(keys, t * q.x, rng), _encrypt_signed(keys, t * q.y, rng)) for q in config.pois]
    log.log_message("poi_ciphertexts", Entity.LBS.value, Entity.EDGE_NODE.value, {"count": len(poi_cts)})

    ct_tx, ct_ty = en_virtual_location(query.ct_x, query.ct_y, history_cts, t)
    ct_distances = en_compute_distances(ct_tx, ct_ty, poi_cts)
    log.log_message("virtual_location", Entity.EDGE_NODE.value, Entity.EDGE_NODE.value, {
        "tx": _blob(serialize_she(ct_tx), settings), "ty": _blob(serialize_she(ct_ty), settings),
        "distances": len(ct_distances)
    })

    tx = config.user_location.x + sum(h.x for h in history)
    ty = config.user_location.y + sum(h.y for h in history)
    virtual = GridPoint(tx, ty)
    distances = [virtual.squared_distance(GridPoint(t * q.x, t * q.y)) for q in config.pois]

    comparisons = []
    decisions = {}
    z_by_pair = []
    dgk_transparent = keys.dgk.public.backend == "transparent"
    for a in range(config.n):
        for b in range(a + 1, config.n):
            d_a, d_b = distances[a], distances[b]
            truth = d_a >= d_b
            pair = {"pair": [a, b]}
            record = ComparisonTranscript(pair=(a, b), d_a=d_a, d_b=d_b, z=(1 << l) + d_a - d_b,
                                          decision=truth, truth=truth)

            if mode == ComparisonMode.FAITHFUL:
                ct_w, rho, ct_z = en_compare_prepare(keys, ct_distances[a], ct_distances[b], l, config.k_sec,
                                                     rng, config.m)
                log.log_message("compare_w", Entity.EDGE_NODE.value, Entity.LBS.value,
                                {**pair, "w": _blob(serialize_she(ct_w), settings)})
                bits, w = lbs_reduce_w(ct_w, keys, l, rng)
                log.log_message("dgk_bits", Entity.LBS.value, Entity.EDGE_NODE.value,
                                {**pair, "bits": [_blob(serialize_dgk(c), settings) for c in bits]})
                epsilon = 1 if rng.getrandbits(1) else -1
                rho_bar = mod_reduce(rho, l)
                blinded = en_dgk_combine(bits, to_bits(rho_bar, l), epsilon, rng)
                log.log_message("dgk_blinded", Entity.EDGE_NODE.value, Entity.LBS.value,
                                {**pair, "values": [_blob(serialize_dgk(c), settings) for c in blinded.ciphertexts]})
                flawed = lbs_decide(blinded, keys.dgk.secret)

                record.rho, record.w, record.w_bar, record.rho_bar = rho, w, mod_reduce(w, l), rho_bar
                record.epsilon, record.xi = epsilon, blinded.xi
                if dgk_transparent:
                    record.c_plain = comparison_chain(to_bits(record.w_bar, l), to_bits(rho_bar, l), epsilon)
                record.decision = flawed
                if config.leak_z:
                    log.log_message("leaked_z", Entity.EDGE_NODE.value, Entity.LBS.value,
                                    {**pair, "z": _blob(serialize_she(ct_z), settings)})
                    z = she_decrypt(keys.she.secret, ct_z)
                    z_by_pair.append({"pair": [a, b], "z": z})
                    record.flawed_decision = flawed
                    record.decision = bit(z, l) == 1

            elif mode == ComparisonMode.MASKED:
                ct_z, r = en_mask_difference(keys, ct_distances[a], ct_distances[b], rng, config.mask_range,
                                             config.signed_mask)
                log.log_message("masked_z", Entity.EDGE_NODE.value, Entity.LBS.value,
                                {**pair, "z": _blob(serialize_she(ct_z), settings)})
                z = decode_signed(she_decrypt(keys.she.secret, ct_z), p)
                z_by_pair.append({"pair": [a, b], "z": z})
                record.z, record.mask_r = z, r
                record.decision = z >= 0

            log.log_message("decision", Entity.LBS.value, Entity.LBS.value, {**pair, "result": record.decision})
            decisions[(a, b)] = record.decision
            comparisons.append(record)

    response = lbs_rank_and_respond(decisions, list(config.pois), config.k_nn, keys, rng)
    log.log_message("query_response", Entity.LBS.value, Entity.EDGE_NODE.value, {"sealed_tag": response.sealed["tag"]})
    log.log_message("response_relay", Entity.EDGE_NODE.value, Entity.USER.value, {"sealed_tag": response.sealed["tag"]})
    delivered = unseal(keys.seal_key, response.sealed)

    lbs_view = {
        "t": t, "l": l, "m": config.m, "k_sec": config.k_sec, "mode": mode.value,
        "pois": [q.to_list() for q in config.pois],
        "history": None if config.random_history else [h.to_list() for h in history],
        "z_by_pair": z_by_pair,
        "mask_range": config.mask_range if mode == ComparisonMode.MASKED else None,
        "signed_mask": config.signed_mask
    }
    truth_ranking = brute_force_knn(distances, config.n)
    sidecar = {
        "distances": distances,
        "ranking": truth_ranking,
        "knn": truth_ranking[:config.k_nn],
        "user_location": config.user_location.to_list(),
        "virtual_location_scaled": [tx, ty],
        "history": [h.to_list() for h in history],
        "differences": [{"pair": [c.pair[0], c.pair[1]], "delta": c.d_a - c.d_b} for c in comparisons],
        "masks": [{"pair": [c.pair[0], c.pair[1]], "r": c.mask_r} for c in comparisons if c.mask_r is not None],
        "delivered": delivered
    }
    monitoring.track_stage("run_full_query", (time.perf_counter() - started) * 1000, {
        "mode": mode.value, "pois": config.n, "pairs": len(comparisons), "messages": len(log)
    })
    monitoring.track_custom_metric("comparisons_run", len(comparisons), {"mode": mode.value})
    return Transcript(config=config, messages=log.to_list(), comparisons=comparisons, response=response,
                      lbs_view=lbs_view, sidecar=sidecar, fingerprints=keys.fingerprints)


def load_scenario(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ValidationError("config", f"cannot read {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise ValidationError("config", f"invalid JSON at line {e.lineno}: {e.msg}")
    return ScenarioConfig.from_dict(data)


def check_transcript(data):
    """Validate a transcript loaded from disk"""
    if not isinstance(data, dict) or data.get("format_version") != TRANSCRIPT_FORMAT:
        found = data.get("format_version") if isinstance(data, dict) else None
        raise ValidationError("format_version", f"expected {TRANSCRIPT_FORMAT}, got {found!r}")
    for key in ("lbs_view", "sidecar", "config"):
        if key not in data:
            raise ValidationError(key, "missing from transcript")
    return data
