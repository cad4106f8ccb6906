"""Round-based channel assignment for any-to-any links through converter nodes.

Every party converts its photon with its own channel-selective converter;
two parties are linked in a round when both photons are converted to the
same DWDM channel and meet at a Bell-measurement midpoint. All parties
share one signal frequency, so a common output channel means a common
pump channel.

The packing is greedy (pairs sorted by demand, disjoint pairs packed into
each round, lowest free channel first). It is not optimal and can be
swapped for a matching-based solver behind :func:`schedule`.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from functools import lru_cache

from .errors import ConfigError, DomainError, InfeasibleError
from .pump import min_switch_interval
from .spectral import ChannelPlan, channel_frequency, converted_frequency


@dataclass(frozen=True)
class PartyLinkRequest:
    party_a: str
    party_b: str
    demand_rounds: int = 1

    def __post_init__(self):
        if self.party_a == self.party_b:
            raise ConfigError(f"party {self.party_a!r} cannot link to itself")
        if self.demand_rounds < 1:
            raise ConfigError("demand must be at least one round")

    @property
    def key(self):
        return tuple(sorted((str(self.party_a), str(self.party_b))))


@dataclass(frozen=True)
class Pairing:
    party_a: str
    party_b: str
    pump_a: int
    pump_b: int
    midpoint: int
    converted_channel: int


@dataclass(frozen=True)
class RoundAssignment:
    round_index: int
    pairings: tuple


@dataclass(frozen=True)
class RateConstraint:
    tau_s_us: float
    tau_c_us: float
    round_period_us: float

    def __post_init__(self):
        if min(self.tau_s_us, self.tau_c_us, self.round_period_us) <= 0:
            raise DomainError("rate constraint values must be positive")
        if self.round_period_us < self.tau_s_us + self.tau_c_us:
            raise DomainError("round period shorter than switching plus photon width")


@dataclass(frozen=True)
class NetworkPlan:
    """Channel grids of one link layer.

    ``output_plan`` lists the DWDM channels at the midpoints; pump channel
    ``k`` converts the common signal into output channel ``k``.
    """

    signal_ghz: int
    pump_plan: ChannelPlan
    output_plan: ChannelPlan
    midpoints: int = 1

    def __post_init__(self):
        if self.pump_plan.count != self.output_plan.count:
            raise ConfigError("pump and output plans must have equal channel counts")
        for k in range(1, self.pump_plan.count + 1):
            if converted_frequency(self.signal_ghz, channel_frequency(self.pump_plan, k)) \
                    != channel_frequency(self.output_plan, k):
                raise ConfigError(f"pump channel {k} does not convert to output channel {k}")
        if self.midpoints < 1:
            raise ConfigError("need at least one midpoint")

    @classmethod
    def from_outputs(cls, signal_ghz, output_plan: ChannelPlan, midpoints=1):
        """Pump grid mirrored from the output grid by energy conservation."""
        pump = ChannelPlan(signal_ghz - output_plan.base_ghz, output_plan.spacing_ghz,
                           output_plan.count, -output_plan.direction)
        return cls(signal_ghz, pump, output_plan, midpoints)

    @property
    def channels(self):
        return self.output_plan.count


def _as_plan(channels, midpoints):
    if isinstance(channels, NetworkPlan):
        return channels
    if isinstance(channels, ChannelPlan):
        return _default_network(channels, midpoints)
    raise ConfigError("channels must be a ChannelPlan or NetworkPlan")


@lru_cache(maxsize=64)
def _default_network(channels, midpoints):
    # without an explicit signal, place it so the pump grid mirrors the output grid
    ends = (channel_frequency(channels, 1), channel_frequency(channels, channels.count))
    return NetworkPlan.from_outputs(min(ends) + max(ends), channels, midpoints)


def schedule(requests, channels, constraint: RateConstraint | None = None, midpoints=1,
             max_rounds=None, horizon_us=None):
    """Greedy round packing of link requests.

    Returns a list of :class:`RoundAssignment`. Output is deterministic:
    pairs are ordered by decreasing demand, then lexicographically.
    The round budget is ``max_rounds``, or ``horizon_us`` divided by the
    constraint's round period; exceeding it raises :class:`InfeasibleError`.
    """
    if max_rounds is None and horizon_us is not None:
        if constraint is None:
            raise ConfigError("a horizon needs a rate constraint")
        max_rounds = int(horizon_us // constraint.round_period_us)
    plan = _as_plan(channels, midpoints)
    capacity = plan.channels * plan.midpoints
    demand = Counter()
    for req in requests:
        demand[req.key] += req.demand_rounds
    remaining = dict(demand)
    order = sorted(demand, key=lambda k: (-demand[k], k))

    rounds = []
    while any(remaining.values()):
        busy = set()
        used = defaultdict(set)  # midpoint -> channels in use
        pairings = []
        for key in order:
            if not remaining[key] or busy & set(key):
                continue
            slot = next(((m, c) for m in range(1, plan.midpoints + 1)
                         for c in range(1, plan.channels + 1) if c not in used[m]), None)
            if slot is None:
                break
            m, c = slot
            used[m].add(c)
            busy.update(key)
            remaining[key] -= 1
            pairings.append(Pairing(key[0], key[1], c, c, m, c))
        if not pairings:
            raise InfeasibleError(
                f"round {len(rounds) + 1}: no pair fits {capacity} channel slots",
                round_index=len(rounds) + 1)
        rounds.append(RoundAssignment(len(rounds) + 1, tuple(pairings)))
        if max_rounds is not None and len(rounds) > max_rounds:
            left = sum(remaining.values())
            raise InfeasibleError(
                f"round {len(rounds)}: {left} pair-rounds still pending after the "
                f"{max_rounds}-round budget with {capacity} channel slots per round",
                round_index=len(rounds))
    return rounds


def validate_schedule(rounds, requests, channels, midpoints=1):
    """Independent check of a schedule; returns a list of problems (empty if valid)."""
    plan = _as_plan(channels, midpoints)
    problems = []
    served = Counter()
    for expected, rnd in enumerate(rounds, start=1):
        if rnd.round_index != expected:
            problems.append(f"round {rnd.round_index} out of sequence")
        parties = [p for pr in rnd.pairings for p in (pr.party_a, pr.party_b)]
        for party, n in Counter(parties).items():
            if n > 1:
                problems.append(f"round {rnd.round_index}: party {party} used {n} times")
        slots = Counter((pr.midpoint, pr.converted_channel) for pr in rnd.pairings)
        for (m, c), n in slots.items():
            if n > 1:
                problems.append(f"round {rnd.round_index}: channel {c} reused at midpoint {m}")
        for pr in rnd.pairings:
            if not 1 <= pr.midpoint <= plan.midpoints:
                problems.append(f"round {rnd.round_index}: unknown midpoint {pr.midpoint}")
                continue
            try:
                fa = converted_frequency(plan.signal_ghz, channel_frequency(plan.pump_plan, pr.pump_a))
                fb = converted_frequency(plan.signal_ghz, channel_frequency(plan.pump_plan, pr.pump_b))
                fout = channel_frequency(plan.output_plan, pr.converted_channel)
            except (IndexError, ValueError) as exc:
                problems.append(f"round {rnd.round_index}: {exc}")
                continue
            if not fa == fb == fout:
                problems.append(f"round {rnd.round_index}: {pr.party_a}-{pr.party_b} "
                                f"photons meet at {fa} and {fb} GHz")
            served[tuple(sorted((pr.party_a, pr.party_b)))] += 1
    wanted = Counter()
    for req in requests:
        wanted[req.key] += req.demand_rounds
    if served != wanted:
        problems.append(f"served {dict(served)} but requested {dict(wanted)}")
    return problems


def optimal_round_count(requests, channels, midpoints=1):
    """Brute-force minimum number of rounds (small instances only)."""
    plan = _as_plan(channels, midpoints)
    capacity = plan.channels * plan.midpoints
    units = []
    demand = Counter()
    for r in requests:
        demand[r.key] += r.demand_rounds
    for key in sorted(demand):
        units.extend([key] * demand[key])
    if not units:
        return 0
    degree = Counter(p for key in units for p in key)
    lower = max(max(degree.values()), -(-len(units) // capacity))

    def fits(k):
        parties = [set() for _ in range(k)]
        sizes = [0] * k

        def place(i, opened):
            if i == len(units):
                return True
            a, b = units[i]
            # identical units may reuse symmetry: only colors >= previous copy's
            start = colors[i - 1] if i and units[i - 1] == units[i] else 0
            for c in range(start, min(opened + 1, k)):
                if sizes[c] < capacity and a not in parties[c] and b not in parties[c]:
                    parties[c].update((a, b))
                    sizes[c] += 1
                    colors[i] = c
                    if place(i + 1, max(opened, c + 1)):
                        return True
                    parties[c].difference_update((a, b))
                    sizes[c] -= 1
            return False

        colors = [0] * len(units)
        return place(0, 0)

    k = lower
    while not fits(k):
        k += 1
    return k


def effective_rate(constraint: RateConstraint, success_prob):
    """Linked pairs per second: ``p * tau_c / (tau_c + tau_s) / round_period``."""
    if not 0 <= success_prob <= 1:
        raise DomainError("success probability must lie in [0, 1]")
    return success_prob * duty_factor(constraint.tau_c_us, constraint.tau_s_us) \
        / (constraint.round_period_us * 1e-6)


def duty_factor(tau_c, tau_s):
    """Fraction of a photon's temporal width left usable by switching."""
    return tau_c / (tau_c + tau_s)


@dataclass(frozen=True)
class FeasibilityReport:
    rounds: int
    violations: tuple  # (party, round_from, round_to, gap_us)
    min_interval_us: float
    channel_use: dict

    @property
    def ok(self):
        return not self.violations


def feasibility_report(rounds, pump_configs, round_period_us) -> FeasibilityReport:
    """Flag pump changes on one node that come faster than the shutters allow."""
    limit = min_switch_interval(pump_configs)
    last = {}
    violations = []
    use = Counter()
    for rnd in rounds:
        for pr in rnd.pairings:
            use[pr.converted_channel] += 1
            for party, pump in ((pr.party_a, pr.pump_a), (pr.party_b, pr.pump_b)):
                prev = last.get(party)
                if prev is not None and prev[1] != pump:
                    gap = (rnd.round_index - prev[0]) * round_period_us
                    if gap < limit:
                        violations.append((party, prev[0], rnd.round_index, gap))
                last[party] = (rnd.round_index, pump)
    return FeasibilityReport(len(rounds), tuple(violations), limit, dict(sorted(use.items())))
