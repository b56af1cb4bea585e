import numpy as np
import pytest
from hypothesis import given, strategies as st

from voltvar.feeder import (Bases, Bus, FeederError, InverterSpec, Line, bundled_feeder_path,
                            parse_feeder, random_feeder, validate_radial)

HEADER = "[bases]\nv_base_kv,12\ns_base_mva,1\n"


def raw_table(section):
    rows, cur = [], None
    for line in bundled_feeder_path().read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            cur = line[1:-1]
            continue
        if cur == section:
            rows.append([float(v) for v in line.split(",")])
    return rows


def test_bases():
    b = Bases(12e3, 1e6)
    assert b.z_base == pytest.approx(144.0, rel=1e-12)
    with pytest.raises(FeederError):
        Bases(0.0, 1e6)
    with pytest.raises(FeederError):
        parse_feeder("[bases]\nv_base_kv,12\ns_base_mva,-1\n[lines]\n1,2,1,1\n")


def test_bundled_feeder_shape(sce56):
    assert sce56.n_bus == 56 and sce56.n_line == 55
    assert sorted(sce56.capacitor_buses) == [19, 21, 30, 53]
    for b in sce56.capacitor_buses:
        assert sce56.bus(b).shunt_cap == pytest.approx(0.6)
    assert sce56.inverter_buses == [45]
    assert sce56.bus(45).inverter.pv_capacity == pytest.approx(5.0)
    assert sce56.root == 1


def test_first_line_in_per_unit(sce56):
    ln = sce56.lines[sce56.index(2) - 1]
    assert (ln.from_bus, ln.to_bus) == (1, 2)
    assert ln.r == pytest.approx(0.160 / 144, rel=1e-12)
    assert ln.x == pytest.approx(0.388 / 144, rel=1e-12)


def test_cap_row(sce56):
    assert sce56.bus(19).shunt_cap == pytest.approx(0.6, rel=1e-12)


def test_empty_loads_two_bus():
    m = parse_feeder(HEADER + "[lines]\n1,2,0.5,0.5\n[loads]\n")
    assert m.n_bus == 2 and m.n_line == 1
    assert all(b.peak_load == 0 for b in m.buses)


def test_reconstructed_loads(sce56):
    assert sce56.bus(27).peak_load == pytest.approx(0.048)
    assert sce56.bus(28).peak_load == pytest.approx(0.038)


def test_per_unit_round_trip(sce56):
    phys = sce56.to_physical()
    lines = {(int(f), int(t)): (r, x) for f, t, r, x in raw_table("lines")}
    assert len(phys["lines"]) == len(lines)
    for f, t, r, x in phys["lines"]:
        r0, x0 = lines[(f, t)]
        assert r == pytest.approx(r0, rel=1e-9) and x == pytest.approx(x0, rel=1e-9)
    for bus, mva in raw_table("loads"):
        assert phys["loads"][int(bus)] == pytest.approx(mva, rel=1e-9)
    for bus, mvar in raw_table("shunt_caps"):
        assert phys["shunt_caps"][int(bus)] == pytest.approx(mvar, rel=1e-9)


def test_parse_deterministic():
    text = bundled_feeder_path().read_text()
    a, b = parse_feeder(text), parse_feeder(text)
    assert a.buses == b.buses and a.lines == b.lines


@pytest.mark.parametrize("body, msg", [
    ("[lines]\n1,2,1,1\n[loads]\n2,0.1\n2,0.2\n", "duplicate bus id"),
    ("[lines]\n1,2,1,1\n2,3,1,1\n3,1,1,1\n", "cycle"),
    ("[lines]\n1,2,1,1\n3,4,1,1\n", "unreachable"),
    ("[lines]\n1,2,1,1\n[loads]\n7,0.1\n", "unknown bus"),
    ("[lines]\n1,2,1,1\n[shunt_caps]\n9,0.6\n", "unknown bus"),
])
def test_parse_errors(body, msg):
    with pytest.raises(FeederError, match=msg):
        parse_feeder(HEADER + body)


def test_parse_optional_fields():
    text = HEADER + ("[root]\n1\n[lines]\n1,2,1.44,2.88\n2,3,1.44,2.88\n[loads]\n3,0.5,2\n"
                     "[inverters]\n3,1.0,0.02,0.03,0.04\n[pv]\n3,0.8\n[voltage_limits]\n*,0.95,1.05\n2,0.9,1.1\n")
    m = parse_feeder(text)
    assert m.bus(3).load_exponent == 2
    assert m.bus(3).inverter.loss_coeffs == (0.02, 0.03, 0.04)
    assert m.bus(3).inverter.pv_capacity == pytest.approx(0.8)
    assert (m.bus(3).v_min, m.bus(3).v_max) == (0.95, 1.05)
    assert (m.bus(2).v_min, m.bus(2).v_max) == (0.9, 1.1)
    assert m.lines[0].r == pytest.approx(0.01)


def test_bus_invariants():
    with pytest.raises(FeederError):
        Bus(1, load_exponent=2.5)
    with pytest.raises(FeederError):
        Bus(1, v_min=1.05, v_max=1.0)
    with pytest.raises(FeederError):
        InverterSpec(0.0)
    with pytest.raises(FeederError):
        InverterSpec(1.0, (0.1, -0.1, 0.0))


def test_var_limit():
    inv = InverterSpec(5.5)
    assert inv.var_limit(4.0) == pytest.approx(np.sqrt(5.5**2 - 16.0))
    assert inv.var_limit(4.0) == pytest.approx(3.775, abs=5e-4)
    with pytest.raises(FeederError):
        inv.var_limit(6.0)


def test_validate_path():
    buses = [1, 2, 3]
    order, parent = validate_radial(buses, [Line(1, 2, 0.1, 0.1), Line(2, 3, 0.1, 0.1)], 1)
    assert order == [1, 2, 3]
    assert parent == {2: 1, 3: 2}


def test_validate_cycle():
    lines = [Line(1, 2, 0.1, 0.1), Line(2, 3, 0.1, 0.1), Line(3, 1, 0.1, 0.1)]
    with pytest.raises(FeederError, match="cycle detected"):
        validate_radial([1, 2, 3], lines, 1)


def test_validate_unreachable_and_unknown():
    with pytest.raises(FeederError, match="unreachable"):
        validate_radial([1, 2, 3], [Line(1, 2, 0.1, 0.1)], 1)
    with pytest.raises(FeederError, match="unknown bus"):
        validate_radial([1, 2], [Line(1, 5, 0.1, 0.1)], 1)


def test_validate_bundled(sce56):
    order, parent = validate_radial(sce56)
    assert len(order) == 56 and order[0] == 1
    seen = set()
    for b in order:
        assert b == 1 or parent[b] in seen
        seen.add(b)


def test_lines_reoriented_away_from_root():
    text = HEADER + "[root]\n1\n[lines]\n2,1,1,1\n3,2,1,1\n"
    m = parse_feeder(text)
    assert [(ln.from_bus, ln.to_bus) for ln in m.lines] == [(1, 2), (2, 3)]


@st.composite
def trees(draw):
    n = draw(st.integers(2, 25))
    parents = [draw(st.integers(0, k - 1)) for k in range(1, n)]
    labels = draw(st.permutations(list(range(1, n + 1))))
    flips = draw(st.lists(st.booleans(), min_size=n - 1, max_size=n - 1))
    lines = []
    for k, (p, flip) in enumerate(zip(parents, flips), start=1):
        a, b = labels[p], labels[k]
        lines.append((b, a) if flip else (a, b))
    order = draw(st.permutations(lines))
    return labels[0], order


@given(trees())
def test_random_tree_parses(tree):
    root, lines = tree
    body = "".join(f"{a},{b},1.0,2.0\n" for a, b in lines)
    m = parse_feeder(HEADER + f"[root]\n{root}\n[lines]\n" + body)
    assert m.n_line == m.n_bus - 1
    order, parent = validate_radial(m)
    assert order == m.bus_ids
    for k, ln in enumerate(m.lines):
        assert ln.to_bus == m.buses[k + 1].id
        assert parent[ln.to_bus] == ln.from_bus
        assert m.index(ln.from_bus) < k + 1


@given(trees(), st.integers(0, 10))
def test_extra_edge_is_rejected(tree, k):
    root, lines = tree
    ids = sorted({b for ln in lines for b in ln})
    a, b = ids[k % len(ids)], ids[(k + 1) % len(ids)]
    body = "".join(f"{u},{v},1.0,2.0\n" for u, v in list(lines) + [(a, b)])
    with pytest.raises(FeederError):
        parse_feeder(HEADER + f"[root]\n{root}\n[lines]\n" + body)


def test_random_feeder_is_radial():
    rng = np.random.default_rng(3)
    for n in (10, 30, 50):
        m = random_feeder(rng, n)
        assert m.n_bus == n and m.n_line == n - 1
        assert len(m.inverter_buses) == 1
