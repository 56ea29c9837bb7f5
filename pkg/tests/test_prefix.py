import ipaddress

import pytest
from hypothesis import given
from hypothesis import strategies as st

from prefixguard.prefix import (AsPath, InvalidAsn, IpPrefix, LengthOutOfRange, MalformedPrefix,
                                NonCanonical, Unsplittable, check_asn, contains, deaggregate,
                                parse_prefix, render_prefix)

from oracles import blocks24, contains_by_blocks, host_bits_clear, net
from strategies import nested, prefixes


def P(text):
    return parse_prefix(text)


class TestParse:
    def test_slash23(self):
        p = P("10.0.0.0/23")
        assert (p.address, p.length) == (10 << 24, 23)

    def test_default_route(self):
        assert P("0.0.0.0/0") == IpPrefix(0, 0)

    def test_host_bits_rejected_not_masked(self):
        with pytest.raises(NonCanonical):
            P("10.0.1.0/23")

    @pytest.mark.parametrize("text", ["10.0.0.0", "10.0.0/8", "10.0.0.0/", "a.b.c.d/8", " 10.0.0.0/8",
                                      "10.0.0.0/8 ", "256.0.0.0/8", "10.0.0.0/-1", "10.0.0.0.0/8", ""])
    def test_malformed(self, text):
        with pytest.raises(MalformedPrefix):
            P(text)

    @pytest.mark.parametrize("text", ["10.0.0.0/33", "0.0.0.0/99"])
    def test_length_out_of_range(self, text):
        with pytest.raises(LengthOutOfRange):
            P(text)

    def test_equality_is_address_and_length(self):
        assert P("10.0.0.0/24") == P("10.0.0.0/24")
        assert P("10.0.0.0/24") != P("10.0.0.0/23")

    @given(st.integers(0, 2**32 - 1), st.integers(0, 32))
    def test_canonical_check_matches_host_bit_oracle(self, address, length):
        text = f"{ipaddress.IPv4Address(address)}/{length}"
        if host_bits_clear(address, length):
            assert P(text) == IpPrefix(address, length)
        else:
            with pytest.raises(NonCanonical):
                P(text)

    @given(prefixes())
    def test_parse_render_identity(self, p):
        assert P(render_prefix(p)) == p
        assert str(p) == str(net(p))


class TestContains:
    def test_examples(self):
        assert contains(P("10.0.0.0/23"), P("10.0.1.0/24"))
        assert contains(P("10.0.0.0/23"), P("10.0.0.0/23"))
        assert not contains(P("10.0.0.0/24"), P("10.0.0.0/23"))

    def test_examples_against_block_oracle(self):
        for a, b in [("10.0.0.0/23", "10.0.1.0/24"), ("10.0.0.0/23", "10.0.0.0/23"),
                     ("10.0.0.0/24", "10.0.0.0/23"), ("10.0.0.0/23", "10.0.2.0/24")]:
            assert contains(P(a), P(b)) == contains_by_blocks(a, b)

    @given(prefixes(0, 24), prefixes(0, 24))
    def test_matches_block_enumeration(self, a, b):
        # keep the enumeration cheap: only compare prefixes of length >= 8
        if a.length >= 8 and b.length >= 8:
            assert contains(a, b) == contains_by_blocks(a, b)

    @given(prefixes(), prefixes())
    def test_matches_ipaddress(self, a, b):
        assert contains(a, b) == net(b).subnet_of(net(a))

    @given(nested())
    def test_nested_always_contained(self, pair):
        outer, inner = pair
        assert contains(outer, inner)

    @given(prefixes())
    def test_reflexive(self, p):
        assert contains(p, p)

    @given(prefixes(), prefixes())
    def test_antisymmetric(self, a, b):
        if contains(a, b) and contains(b, a):
            assert a == b

    @given(nested(), st.data())
    def test_transitive(self, pair, data):
        a, b = pair
        length = data.draw(st.integers(b.length, 32))
        extra = length - b.length
        low = data.draw(st.integers(0, (1 << extra) - 1)) if extra else 0
        c = IpPrefix(b.address | (low << (32 - length)), length)
        assert contains(a, b) and contains(b, c)
        assert contains(a, c)


class TestDeaggregate:
    def test_slash23(self):
        assert set(deaggregate(P("10.0.0.0/23"))) == {P("10.0.0.0/24"), P("10.0.1.0/24")}

    def test_slash22(self):
        assert deaggregate(P("10.0.0.0/22")) == (P("10.0.0.0/23"), P("10.0.2.0/23"))

    def test_slash22_block_cover(self):
        low, high = deaggregate(P("10.0.0.0/22"))
        assert blocks24(low) | blocks24(high) == blocks24("10.0.0.0/22")
        assert not blocks24(low) & blocks24(high)

    def test_slash24_unsplittable(self):
        with pytest.raises(Unsplittable):
            deaggregate(P("198.51.100.0/24"))

    def test_longer_than_max_unsplittable(self):
        with pytest.raises(Unsplittable):
            deaggregate(P("198.51.100.0/25"))

    def test_max_length_configurable(self):
        low, high = deaggregate(P("198.51.100.0/24"), max_length=25)
        assert (str(low), str(high)) == ("198.51.100.0/25", "198.51.100.128/25")
        with pytest.raises(Unsplittable):
            deaggregate(P("198.51.100.0/23"), max_length=23)

    @given(prefixes(0, 23))
    def test_cover_property(self, p):
        low, high = deaggregate(p)
        assert contains(p, low) and contains(p, high)
        assert not low.overlaps(high)
        assert low.size + high.size == p.size
        assert low.length == high.length == p.length + 1
        assert low < high
        assert [net(low), net(high)] == list(net(p).subnets(prefixlen_diff=1))


class TestAsn:
    def test_bounds(self):
        assert check_asn(1) == 1
        assert check_asn(2**32 - 1) == 2**32 - 1
        assert check_asn("65001") == 65001
        for bad in (-1, 2**32, "AS1", 1.5, True, None):
            with pytest.raises(InvalidAsn):
                check_asn(bad)

    def test_zero_rejected_only_as_origin(self):
        with pytest.raises(InvalidAsn):
            check_asn(0)
        assert check_asn(0, origin=False) == 0


class TestAsPath:
    def test_origin_is_last(self):
        path = AsPath.of([64500, 65002])
        assert path.origin() == 65002
        assert path.first_hop() == 64500
        assert len(path) == 2 and 64500 in path

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            AsPath(())

    def test_loop_detection(self):
        assert AsPath.of([1, 2, 1]).has_loop()
        assert not AsPath.of([1, 2, 3]).prepend(4).has_loop()
