import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from isingscreen.problem import (CapacityError, EncodingError, IsingModel, LabeledSample,
                                 QuboModel, all_bitstrings, as_bits, bits_to_index, decode_groups,
                                 encode_groups, exact_spectrum, group_kinds, index_to_str,
                                 ising_energy, qubo_energy, qubo_to_ising, read_dataset, spins,
                                 write_dataset)

from conftest import random_ising, random_qubo


# -- encodings ---------------------------------------------------------------

@pytest.mark.parametrize("labels, bits", [
    (["Me", "CN", "Me", "CN", "Me", "H"], "110011001110"),
    (["CN"] * 6, "000000000000"),
    (["Me"] * 6, "111111111111"),
    (["CN"] * 5 + ["F"], "000000000001"),
])
def test_group_codes(labels, bits):
    assert "".join(map(str, encode_groups(labels))) == bits
    assert decode_groups(bits) == labels


def test_encode_decode_roundtrip_all_candidates():
    for row in all_bitstrings(12):
        assert np.array_equal(encode_groups(decode_groups(row)), row)


def test_encoding_errors():
    with pytest.raises(EncodingError):
        encode_groups(["Me", "Cl"])
    with pytest.raises(EncodingError):
        encode_groups(["Me"], site_count=6)
    with pytest.raises(EncodingError):
        decode_groups("101")
    with pytest.raises(EncodingError):
        as_bits("01a")


def test_group_kinds():
    assert group_kinds("000000000000") == 1
    assert group_kinds("110011001110") == 3


def test_bit_order_is_little_endian():
    assert bits_to_index("100") == 1
    assert bits_to_index("001") == 4
    assert index_to_str(6, 3) == "011"
    assert np.array_equal(all_bitstrings(2), [[0, 0], [1, 0], [0, 1], [1, 1]])


def test_labeled_sample_rejects_nonfinite():
    with pytest.raises(ValueError):
        LabeledSample("01", float("nan"))


def test_dataset_roundtrip(tmp_path):
    data = [LabeledSample("0110", 1.25), LabeledSample("1111", -3.0)]
    path = tmp_path / "d.csv"
    write_dataset(data, path, aux={"osc": [0.1, 0.2]})
    raw = path.read_bytes()
    assert raw.startswith(b"bits,target,osc\n") and b"\r" not in raw
    back = read_dataset(path)
    assert [(s.x.tolist(), s.y) for s in back] == [(s.x.tolist(), s.y) for s in data]


def test_dataset_bad_header(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("x,y\n01,1\n")
    with pytest.raises(ValueError):
        read_dataset(path)


# -- QUBO --------------------------------------------------------------------

def test_qubo_energy_hand_values():
    m = QuboModel.from_terms(2, 0.0, {0: 1.0, 1: 2.0}, [(0, 1, 4.0)])
    assert qubo_energy(m, "11") == 7.0
    assert qubo_energy(m, "00") == 0.0
    m = QuboModel.from_terms(3, 2.5, {0: 1.0})
    assert qubo_energy(m, "000") == 2.5


def test_qubo_energy_matches_term_sum():
    rng = np.random.default_rng(0)
    m = random_qubo(rng, 7)
    for _ in range(50):
        x = rng.integers(0, 2, 7)
        total = m.w0
        for i in range(7):
            total += m.linear[i] * x[i]
            for j in range(i + 1, 7):
                total += m.quadratic[i, j] * x[i] * x[j]
        assert qubo_energy(m, x) == pytest.approx(total, rel=1e-12, abs=1e-12)


def test_qubo_storage_order_invariant():
    a = QuboModel.from_terms(3, 0.0, {}, [(0, 2, 1.5), (1, 2, -2.0)])
    b = QuboModel.from_terms(3, 0.0, {}, [(2, 1, -2.0), (2, 0, 1.5)])
    lower = np.zeros((3, 3))
    lower[2, 0], lower[2, 1] = 1.5, -2.0
    c = QuboModel(3, 0.0, np.zeros(3), lower)
    for x in all_bitstrings(3):
        assert qubo_energy(a, x) == qubo_energy(b, x) == qubo_energy(c, x)


def test_qubo_length_mismatch():
    with pytest.raises(ValueError):
        qubo_energy(QuboModel.from_terms(3), "01")


def test_qubo_json_roundtrip(tmp_path):
    m = random_qubo(np.random.default_rng(1), 5, "maximize")
    m.save(tmp_path / "m.json")
    back = QuboModel.load(tmp_path / "m.json")
    assert back.sense == "maximize"
    assert np.array_equal(back.quadratic, m.quadratic)
    assert set(json.loads((tmp_path / "m.json").read_text())) == {"n", "w0", "linear",
                                                                  "quadratic", "sense"}


# -- Ising conversion --------------------------------------------------------

def test_single_variable_conversion():
    im = qubo_to_ising(QuboModel.from_terms(1, 0.0, {0: 1.0}))
    assert im.h[0] == -0.5 and im.offset == 0.5


def test_pair_conversion():
    im = qubo_to_ising(QuboModel.from_terms(2, 0.0, {}, [(0, 1, 4.0)]))
    assert im.j[0, 1] == 1.0
    assert np.array_equal(im.h, [-1.0, -1.0])
    assert im.offset == 1.0


def test_spin_convention():
    assert np.array_equal(spins("01"), [1, -1])


@pytest.mark.parametrize("n", [1, 2, 5, 9, 12, 16])
@pytest.mark.parametrize("sense", ["minimize", "maximize"])
def test_qubo_ising_equivalence_exhaustive(n, sense):
    m = random_qubo(np.random.default_rng(n), n, sense)
    im = qubo_to_ising(m)
    xs = all_bitstrings(n)
    qe = m.energies(xs)
    sign = -1.0 if sense == "maximize" else 1.0
    ie = im.diagonal() + im.offset
    assert np.all(np.abs(sign * qe - ie) <= 1e-9 * (1 + np.abs(qe)))
    # score undoes the sign flip
    k = 3 % (1 << n)
    assert im.score(im.diagonal()[k]) == pytest.approx(qe[k], abs=1e-9 * (1 + abs(qe[k])))


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_qubo_ising_equivalence_property(n, seed):
    rng = np.random.default_rng(seed)
    m = random_qubo(rng, n)
    im = qubo_to_ising(m)
    for x in all_bitstrings(n):
        q = qubo_energy(m, x)
        assert abs(q - (ising_energy(im, spins(x)) + im.offset)) <= 1e-9 * (1 + abs(q))


def test_embedded_model_conversion_exhaustive(model):
    from isingscreen.planted import embedded_qubo
    q = embedded_qubo()
    xs = all_bitstrings(12)
    assert np.allclose(-(model.diagonal() + model.offset), q.energies(xs), rtol=1e-12, atol=1e-9)


def test_ising_json_roundtrip():
    im = random_ising(np.random.default_rng(2), 4)
    back = IsingModel.from_json(json.loads(json.dumps(im.to_json())))
    assert np.array_equal(back.diagonal(), im.diagonal())


# -- exhaustive oracle -------------------------------------------------------

def test_zz_spectrum_is_degenerate():
    im = IsingModel(2, [0.0, 0.0], [[0, 1.0], [0, 0]], offset=0.5)
    sl = exact_spectrum(im, 1)
    assert sl.energies == [-1.0]
    assert set(sl.bitstrings(0)) == {"01", "10"}


def test_embedded_ground_state(spectrum):
    assert spectrum.bitstrings(0) == ("110011001110",)


def test_embedded_low_levels_frozen(model, spectrum):
    # enumeration of the bundled model, frozen at generation time
    expected = [("110011001110", 333.7705077446085), ("110001001111", 333.56997169025965),
                ("110001001110", 332.8253565099283), ("110011001111", 332.3960479969131),
                ("111011001110", 331.52060181016606)]
    got = [(spectrum.bitstrings(i)[0], model.score(e)) for i, e in enumerate(spectrum.energies)]
    for (b, s), (gb, gs) in zip(expected, got):
        assert gb == b
        assert gs == pytest.approx(s, rel=1e-12)


@given(st.integers(1, 10), st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_spectrum_properties(n, seed, k):
    rng = np.random.default_rng(seed)
    # integer couplings force degeneracies
    im = IsingModel(n, rng.integers(-2, 3, n), np.triu(rng.integers(-2, 3, (n, n)), 1))
    sl = exact_spectrum(im, k)
    e = sl.energies
    assert all(a < b for a, b in zip(e, e[1:]))
    flat = [b for _, b in sl.flat()]
    assert len(flat) == len(set(flat))
    for energy, bits in sl.levels:
        for b in bits:
            assert im.energy(b) == pytest.approx(energy, rel=1e-12, abs=1e-12)
    samples = rng.integers(0, 2, (200, n))
    assert all(e[0] <= im.energy(x) + 1e-12 for x in samples)
    # the level list is a prefix of the full sorted distinct spectrum
    distinct = sorted(set(np.round(im.diagonal(), 9)))
    assert np.allclose(e, distinct[:len(e)])


def test_spectrum_capacity_error():
    im = IsingModel(25, np.zeros(25), np.zeros((25, 25)))
    with pytest.raises(CapacityError):
        exact_spectrum(im, 1)
    with pytest.raises(ValueError):
        exact_spectrum(IsingModel(2, [0, 0], np.zeros((2, 2))), 0)
