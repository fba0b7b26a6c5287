"""Cryptanalysis of the comparison protocol and location recovery.

* the comparison decision does not depend on the MSB of z (collisions,
  measured agreement, exact agreement by enumeration);
* leaked differences pin the virtual location through the linearized
  circle equations, then the distances and the moving average fall out;
* multiplicatively masked differences are unmasked by divisor enumeration
  and narrowed with triangle consistency.
"""
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from config import Config
from dgk import dgk_keygen
from errors import (AttackStageError, InconsistentDataError, InconsistentSystemError, LinearSystemError,
                    UnderdeterminedSystemError, ValidationError)
from monitoring import monitoring
from numkit import SeededRng, bit, divisors_up_to, mod_reduce, solve_linear_exact, to_bits
from protocol import (KeyRing, Transcript, check_transcript, comparison_bits, comparison_chain, dgk_space_for,
                      en_compare_prepare, en_dgk_combine, lbs_decide, lbs_reduce_w, she_modulus_for)
from she import SheParams, she_encrypt, she_keygen

FLAW_FORMAT = "lbsaudit.flaw/1"
RECOVERY_FORMAT = "lbsaudit.recovery/1"
LOCATE_FORMAT = "lbsaudit.locate/1"
UNMASK_FORMAT = "lbsaudit.unmask/1"

# Two worked comparisons that share (w_bar, rho_bar) but not the MSB of z
WORKED_L = 2
WORKED_RHO = 31
WORKED_Z = (3, 7)

EXHAUSTIVE_MAX_L = 8


def exact_value(v):
    """JSON form of an exact rational: int when integral, else "num/den" """
    v = Fraction(v)
    return v.numerator if v.denominator == 1 else f"{v.numerator}/{v.denominator}"


@dataclass
class Collision:
    l: int
    rho: int
    z0: int
    z1: int
    w0: int
    w1: int
    w_bar: int
    rho_bar: int


@dataclass
class FlawSetting:
    m: int
    k_sec: int

    @property
    def l(self):
        return comparison_bits(self.m)

    @property
    def u(self):
        return dgk_space_for(self.l)

    @property
    def she_modulus(self):
        return she_modulus_for(self.m, self.k_sec)

    def validate(self):
        if not isinstance(self.m, int) or self.m < 1:
            raise ValidationError("m", f"must be an integer >= 1, got {self.m!r}")
        if not isinstance(self.k_sec, int) or self.k_sec < 1:
            raise ValidationError("k_sec", f"must be an integer >= 1, got {self.k_sec!r}")
        return self


@dataclass
class FlawReport:
    setting: FlawSetting
    mode: str
    trials: int
    agreements: int
    confusion: dict
    counterexamples: list
    worked_example: dict
    exact_agreement_rate: Fraction = None

    @property
    def agreement_rate(self):
        return self.agreements / self.trials

    def to_dict(self):
        exact = self.exact_agreement_rate
        return {
            "format_version": FLAW_FORMAT,
            "setting": {"m": self.setting.m, "l": self.setting.l, "k_sec": self.setting.k_sec,
                        "u": self.setting.u, "she_modulus": self.setting.she_modulus},
            "mode": self.mode,
            "trials": self.trials,
            "agreements": self.agreements,
            "agreement_rate": self.agreement_rate,
            "exact_agreement_rate": None if exact is None else float(exact),
            "exact_agreement_fraction": None if exact is None else exact_value(exact),
            "confusion": self.confusion,
            "counterexamples": self.counterexamples,
            "worked_example": self.worked_example,
            "decision_rule_note": ("the decision reads 'zero present' as w_bar > rho_bar for either epsilon; "
                                   "with epsilon = +1 a zero means rho_bar > w_bar")
        }


@dataclass
class MaskCandidateSet:
    pair: tuple
    z: int
    candidates: list
    survivors: list = field(default_factory=list)


@dataclass
class FilterResult:
    assignments: list
    unique: bool
    partial: bool
    nodes_visited: int


@dataclass
class RecoveryReport:
    mode: str
    differences: dict
    virtual_location_scaled: tuple
    distances: list
    user_location: tuple
    virtual_only: bool
    candidates: list
    unique: bool
    partial: bool = False
    mask_candidates: list = field(default_factory=list)
    filter_nodes: int = 0
    matches: dict = field(default_factory=dict)

    def to_dict(self, format_version=RECOVERY_FORMAT):
        def point(p):
            return None if p is None else [exact_value(v) for v in p]

        return {
            "format_version": format_version,
            "mode": self.mode,
            "differences": [{"pair": list(k), "delta": v} for k, v in sorted(self.differences.items())],
            "virtual_location_scaled": point(self.virtual_location_scaled),
            "distances": None if self.distances is None else [exact_value(d) for d in self.distances],
            "user_location": point(self.user_location),
            "virtual_only": self.virtual_only,
            "candidates": [{
                "virtual_location_scaled": point(c["virtual_location_scaled"]),
                "distances": [exact_value(d) for d in c["distances"]],
                "user_location": point(c["user_location"])
            } for c in self.candidates],
            "candidate_count": len(self.candidates),
            "unique": self.unique,
            "partial": self.partial,
            "mask_candidates": [{
                "pair": list(s.pair), "z": s.z, "candidates": s.candidates, "survivors": s.survivors
            } for s in self.mask_candidates],
            "filter_nodes": self.filter_nodes,
            "matches": self.matches
        }


def build_msb_collision(l, rho, z0=0):
    """(z0, z0 + 2^l) with identical (w_bar, rho_bar) and MSBs 0 and 1"""
    if l < 1:
        raise ValidationError("l", "must be >= 1")
    if rho < 0:
        raise ValidationError("rho", "must be >= 0")
    if not 0 <= z0 < (1 << l):
        raise ValidationError("z0", f"must be in [0, 2^{l}) so that its bit {l} is 0")
    z1 = z0 + (1 << l)
    w0, w1 = z0 + rho, z1 + rho
    return Collision(l=l, rho=rho, z0=z0, z1=z1, w0=w0, w1=w1,
                     w_bar=mod_reduce(w0, l), rho_bar=mod_reduce(rho, l))


def chain_decision(w_bar, rho_bar, epsilon, l):
    """Zero-present decision computed on the plaintext c_j chain"""
    return any(c == 0 for c in comparison_chain(to_bits(w_bar, l), to_bits(rho_bar, l), epsilon))


def worked_example():
    collision = build_msb_collision(WORKED_L, WORKED_RHO, WORKED_Z[0])
    decisions = {}
    for epsilon in (-1, 1):
        pair = [chain_decision(mod_reduce(z + collision.rho, WORKED_L), collision.rho_bar, epsilon, WORKED_L)
                for z in (collision.z0, collision.z1)]
        decisions[str(epsilon)] = pair
    return {
        **asdict(collision),
        "msb": [bit(collision.z0, WORKED_L), bit(collision.z1, WORKED_L)],
        "decisions": decisions,
        "decisions_identical": all(a == b for a, b in decisions.values())
    }


def exact_agreement_rate(m, k_sec):
    """Exact probability that the zero-present rule matches d_a >= d_b.

    d_a, d_b uniform on [0, m], rho uniform on [0, 2^(k_sec+l+1)) and epsilon
    uniform on {-1, +1}. Only rho mod 2^l matters, and it is uniform.
    """
    FlawSetting(m, k_sec).validate()
    l = comparison_bits(m)
    span = 1 << l

    # number of (rho_bar, epsilon) choices with decision "zero present", per z mod 2^l
    if l <= EXHAUSTIVE_MAX_L:
        positives = [sum(chain_decision((z_bar + r) % span, r, eps, l) for r in range(span) for eps in (-1, 1))
                     for z_bar in range(span)]
    else:
        positives = None

    agree = 0
    for delta in range(-m, m + 1):
        weight = m + 1 - abs(delta)
        z_bar = (span + delta) % span
        pos = positives[z_bar] if positives is not None else (span if z_bar else 0)
        agree += weight * (pos if delta >= 0 else 2 * span - pos)
    return Fraction(agree, (m + 1) ** 2 * 2 * span)


def _flaw_keys(setting, rng, settings):
    params = SheParams(plaintext_modulus=setting.she_modulus, security_level=settings.SHE_SECURITY_LEVEL,
                       max_depth=settings.SHE_MAX_DEPTH, seed=rng.seed, backend=settings.SHE_BACKEND)
    she = she_keygen(params, rng)
    dgk = dgk_keygen(settings.DGK_MODULUS_BITS, setting.u, rng, backend=settings.DGK_BACKEND,
                     v_bits=settings.DGK_V_BITS)
    return KeyRing(she=she, dgk=dgk, seal_key=b"", holders={}, fingerprints={})


def _run_trials(seed, indices, setting, keys, mode):
    """Outcomes (index, truth, decision, z, rho) for the given trial indices"""
    master = SeededRng(seed)
    l, m = setting.l, setting.m
    outcomes = []
    for i in indices:
        rng = master.spawn(i)
        d_a, d_b = rng.randint(0, m), rng.randint(0, m)
        truth = d_a >= d_b
        z = (1 << l) + d_a - d_b
        if mode == "oracle":
            outcomes.append((i, truth, truth, z, None))
            continue
        pk = keys.she.public
        ct_w, rho, _ = en_compare_prepare(keys, she_encrypt(pk, d_a, rng), she_encrypt(pk, d_b, rng),
                                          l, setting.k_sec, rng, m)
        bits, _ = lbs_reduce_w(ct_w, keys, l, rng)
        epsilon = 1 if rng.getrandbits(1) else -1
        blinded = en_dgk_combine(bits, to_bits(mod_reduce(rho, l), l), epsilon, rng)
        outcomes.append((i, truth, lbs_decide(blinded, keys.dgk.secret), z, rho))
    return outcomes


def demonstrate_flaw(setting, trials, rng, workers=None, mode="faithful", settings=None):
    """Run the comparison on random distances and measure agreement with the truth"""
    settings = settings or Config
    setting.validate()
    if not isinstance(trials, int) or trials < 1:
        raise ValidationError("trials", "must be >= 1")
    if mode not in ("faithful", "oracle"):
        raise ValidationError("mode", "flaw demonstration runs in faithful or oracle mode")
    workers = workers or settings.FLAW_WORKERS
    started = time.perf_counter()

    keys = _flaw_keys(setting, rng.spawn("keys"), settings)
    indices = list(range(trials))
    if workers > 1 and trials > workers:
        chunk = -(-trials // (workers * 4))
        batches = [indices[i:i + chunk] for i in range(0, trials, chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_trials, rng.seed, batch, setting, keys, mode) for batch in batches]
            outcomes = [o for f in futures for o in f.result()]
    else:
        outcomes = _run_trials(rng.seed, indices, setting, keys, mode)
    outcomes.sort(key=lambda o: o[0])

    l = setting.l
    confusion = {"true_positive": 0, "true_negative": 0, "false_positive": 0, "false_negative": 0}
    counterexamples = []
    agreements = 0
    for i, truth, decision, z, rho in outcomes:
        key = ("true_" if truth == decision else "false_") + ("positive" if decision else "negative")
        confusion[key] += 1
        if truth == decision:
            agreements += 1
            continue
        if len(counterexamples) < settings.MAX_COUNTEREXAMPLES and rho is not None:
            partner = z - (1 << l) if bit(z, l) else z + (1 << l)
            counterexamples.append({
                "trial": i, "z": z, "z_partner": partner, "rho": rho,
                "w_bar": mod_reduce(z + rho, l), "rho_bar": mod_reduce(rho, l),
                "msb": bit(z, l), "decision": decision, "truth": truth
            })

    exact = exact_agreement_rate(setting.m, setting.k_sec) if mode == "faithful" else Fraction(1)
    report = FlawReport(setting=setting, mode=mode, trials=trials, agreements=agreements, confusion=confusion,
                        counterexamples=counterexamples, worked_example=worked_example(),
                        exact_agreement_rate=exact)
    monitoring.track_stage("demonstrate_flaw", (time.perf_counter() - started) * 1000, {
        "trials": trials, "mode": mode, "agreement_rate": round(report.agreement_rate, 4)
    })
    return report


def recover_differences_from_z(z_by_pair, l):
    """delta_ij = z_ij - 2^l for every pair"""
    if isinstance(z_by_pair, dict):
        items = z_by_pair.items()
    else:
        items = ((tuple(entry["pair"]), entry["z"]) for entry in z_by_pair)
    return {tuple(pair): z - (1 << l) for pair, z in items}


def recover_virtual_location(deltas, scaled_pois):
    """Exact (T_x, T_y) from the radical-axis rows of every pair"""
    rows = []
    for (i, j), delta in sorted(deltas.items()):
        (xi, yi), (xj, yj) = scaled_pois[i], scaled_pois[j]
        rows.append((2 * (xj - xi), 2 * (yj - yi), delta + xj * xj + yj * yj - xi * xi - yi * yi))
    return solve_linear_exact(rows)


def recover_distances(deltas, location, scaled_pois):
    """Absolute distances from the first POI's circle, cross-checked against every delta"""
    tx, ty = location
    x0, y0 = scaled_pois[0]
    d0 = (tx - x0) ** 2 + (ty - y0) ** 2
    distances = [d0]
    for i in range(1, len(scaled_pois)):
        if (0, i) not in deltas:
            raise InconsistentDataError(f"missing difference for pair (0, {i})")
        distances.append(d0 - deltas[(0, i)])

    for (i, j), delta in deltas.items():
        if distances[i] - distances[j] != delta:
            raise InconsistentDataError(f"pair ({i}, {j}): distances differ by {distances[i] - distances[j]}, "
                                        f"observed {delta}")
    for i, d in enumerate(distances):
        if d < 0:
            raise InconsistentDataError(f"distance {i} is negative")
    return distances


def invert_moving_average(location, history, t):
    """(X_a, Y_a) = T - sum(history); None when the history is unknown"""
    if history is None:
        return None
    if len(history) != t - 1:
        raise ValidationError("history", f"expected {t - 1} points, got {len(history)}")
    tx, ty = location
    return tx - sum(h[0] for h in history), ty - sum(h[1] for h in history)


def unmask_difference(z, m, signed=False):
    """Signed differences d with |d| <= m that divide z"""
    if m < 1:
        raise ValidationError("m", "must be >= 1")
    if z == 0:
        return [0]
    magnitudes = divisors_up_to(abs(z), m)
    if signed:
        return sorted([-d for d in magnitudes] + magnitudes)
    sign = 1 if z > 0 else -1
    return sorted(sign * d for d in magnitudes)


def consistency_filter(candidates, n, node_budget=None):
    """Joint difference assignments consistent on every closed triangle.

    Assignments are driven by delta_0j; every other delta_ij = delta_0j - delta_0i
    must appear in its own candidate set.
    """
    node_budget = node_budget or Config.FILTER_NODE_BUDGET
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in candidates:
                raise ValidationError("candidates", f"missing candidate set for pair ({a}, {b})")
    allowed = {pair: set(values) for pair, values in candidates.items()}

    assignments = []
    chosen = [0] * n
    nodes = 0
    partial = False

    def descend(j):
        nonlocal nodes, partial
        if j == n:
            assignments.append({(a, b): chosen[b] - chosen[a] for a in range(n) for b in range(a + 1, n)})
            return
        for value in candidates[(0, j)]:
            if nodes >= node_budget:
                partial = True
                return
            nodes += 1
            if all(value - chosen[i] in allowed[(i, j)] for i in range(1, j)):
                chosen[j] = value
                descend(j + 1)
            if partial:
                return

    descend(1)
    return FilterResult(assignments=assignments, unique=len(assignments) == 1 and not partial,
                        partial=partial, nodes_visited=nodes)


def _scaled_pois(view):
    t = view["t"]
    return [(t * x, t * y) for x, y in view["pois"]]


def _locate(deltas, scaled_pois):
    location = recover_virtual_location(deltas, scaled_pois)
    return location, recover_distances(deltas, location, scaled_pois)


def _stage_error(stage, error):
    if isinstance(error, UnderdeterminedSystemError):
        return AttackStageError(stage, f"underdetermined: {error}")
    if isinstance(error, InconsistentSystemError):
        return AttackStageError(stage, f"inconsistent: {error}")
    return AttackStageError(stage, str(error))


def full_attack_pipeline(transcript, invert_history=True, node_budget=None):
    """Recover differences, virtual location, distances and (optionally) the user location"""
    data = transcript.to_dict() if isinstance(transcript, Transcript) else check_transcript(transcript)
    view = data["lbs_view"]
    mode = view["mode"]
    n = len(view["pois"])
    scaled = _scaled_pois(view)
    started = time.perf_counter()

    if not view.get("z_by_pair"):
        raise AttackStageError("differences", f"{mode} transcript carries no leaked or masked z values")
    if len(view["z_by_pair"]) != n * (n - 1) // 2:
        raise AttackStageError("differences", f"expected {n * (n - 1) // 2} z values, got {len(view['z_by_pair'])}")

    mask_sets = []
    filter_nodes = 0
    partial = False
    if mode == "masked":
        try:
            candidates = {}
            for entry in view["z_by_pair"]:
                pair = tuple(entry["pair"])
                values = unmask_difference(entry["z"], view["m"], signed=view.get("signed_mask", False))
                candidates[pair] = values
                mask_sets.append(MaskCandidateSet(pair=pair, z=entry["z"], candidates=values))
        except (ArithmeticError, ValidationError) as e:
            raise _stage_error("unmask", e)
        try:
            filtered = consistency_filter(candidates, n, node_budget)
        except ValidationError as e:
            raise _stage_error("filter", e)
        if not filtered.assignments:
            raise AttackStageError("filter", "no joint assignment survives triangle filtering")
        filter_nodes, partial = filtered.nodes_visited, filtered.partial
        for s in mask_sets:
            s.survivors = sorted({a[s.pair] for a in filtered.assignments})
        assignments = filtered.assignments
    else:
        assignments = [recover_differences_from_z(view["z_by_pair"], view["l"])]

    located = []
    last_error = None
    for deltas in assignments:
        try:
            location, distances = _locate(deltas, scaled)
        except LinearSystemError as e:
            last_error = _stage_error("virtual_location", e)
            continue
        except InconsistentDataError as e:
            last_error = _stage_error("distances", e)
            continue
        if any(v.denominator != 1 for v in location):
            last_error = AttackStageError("virtual_location", f"non-integral solution {location}")
            continue
        located.append((deltas, tuple(int(v) for v in location), [int(d) for d in distances]))
    if not located:
        raise last_error

    history = view.get("history")
    virtual_only = history is None or not invert_history
    candidates = []
    seen = set()
    for deltas, location, distances in located:
        user = None
        if not virtual_only:
            try:
                user = invert_moving_average(location, history, view["t"])
            except ValidationError as e:
                raise _stage_error("moving_average", e)
        if location in seen:
            continue
        seen.add(location)
        candidates.append({"deltas": deltas, "virtual_location_scaled": location,
                           "distances": distances, "user_location": user})

    best = candidates[0]
    report = RecoveryReport(
        mode=mode,
        differences=best["deltas"],
        virtual_location_scaled=best["virtual_location_scaled"],
        distances=best["distances"],
        user_location=best["user_location"],
        virtual_only=virtual_only,
        candidates=candidates,
        unique=len(candidates) == 1 and not partial,
        partial=partial,
        mask_candidates=mask_sets,
        filter_nodes=filter_nodes
    )
    if "sidecar" in data:
        report.matches = _match_sidecar(report, data["sidecar"])
    monitoring.track_stage("full_attack_pipeline", (time.perf_counter() - started) * 1000, {
        "mode": mode, "candidates": len(candidates), "virtual_only": virtual_only
    })
    return report


def _match_sidecar(report, sidecar):
    true_deltas = {tuple(d["pair"]): d["delta"] for d in sidecar["differences"]}
    true_virtual = tuple(sidecar["virtual_location_scaled"])
    true_user = tuple(sidecar["user_location"])
    return {
        "differences": report.differences == true_deltas,
        "virtual_location": report.virtual_location_scaled == true_virtual,
        "distances": report.distances == sidecar["distances"],
        "user_location": None if report.virtual_only else report.user_location == true_user,
        "sidecar_among_candidates": any(c["virtual_location_scaled"] == true_virtual for c in report.candidates)
    }
