from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import small_deck_text
from polysim import units
from polysim.cases import table1_deck, table2_deck
from polysim.deck import DeckError, PropertyTable, convert_to_si, parse_deck, serialize_deck, validate


def messages(diags, severity="error"):
    return {d.message for d in diags if d.severity == severity}


class TestParse:
    def test_minimal_single_cell_deck(self):
        d = parse_deck(small_deck_text(1, 1, 1, wells=False))
        assert (d.grid.nx, d.grid.ny, d.grid.nz) == (1, 1, 1)
        assert d.wells == []

    def test_table1_grid(self):
        d = parse_deck(table1_deck())
        assert (d.grid.nx, d.grid.ny, d.grid.nz) == (15, 1, 1)
        assert np.all(d.grid.dx == 100.0)

    def test_descending_table_reports_line(self):
        text = small_deck_text().replace("SWOF\n", "SWOF\n  0.95 1 0 0\n", 1)
        with pytest.raises(DeckError, match="monotone") as exc:
            parse_deck(text)
        # 1-based: SWOF header, inserted row, then the first row that fails to increase
        assert exc.value.line == text.splitlines().index("SWOF") + 3

    def test_unknown_keyword(self):
        with pytest.raises(DeckError, match="unknown keyword"):
            parse_deck(small_deck_text().replace("ROCKC", "FOO 1\nROCKC"))

    def test_missing_section(self):
        with pytest.raises(DeckError, match="PVTO"):
            parse_deck(small_deck_text().replace("PVTO 850 1.0 1e-9 2e-3\n", ""))

    def test_bad_number(self):
        with pytest.raises(DeckError, match="line"):
            parse_deck(small_deck_text().replace("TOPS 1000", "TOPS abc"))

    def test_repeat_counts_expand(self):
        d = parse_deck(small_deck_text(2, 1, 1, wells=False).replace("DX 10", "DX 2*7.5"))
        assert d.grid.dx.tolist() == [7.5, 7.5]

    def test_comments_ignored(self):
        text = "# header\n" + small_deck_text(wells=False).replace("TOPS 1000", "TOPS 1000  # datum")
        assert parse_deck(text).grid.tops[0] == 1000.0


class TestPropertyTable:
    def test_needs_increasing_breakpoints(self):
        with pytest.raises(ValueError):
            PropertyTable([0.0, 0.0], [1.0, 2.0])

    def test_lookup_interpolates_and_clamps(self):
        t = PropertyTable([0.0, 1.0, 3.0], [0.0, 2.0, 3.0])
        v, s = t.lookup(np.array([-1.0, 0.5, 2.0, 9.0]))
        assert v.tolist() == [0.0, 1.0, 2.5, 3.0]
        assert s.tolist() == [0.0, 2.0, 0.5, 0.0]

    @given(st.floats(-2.0, 5.0))
    def test_lookup_is_continuous(self, x):
        t = PropertyTable([0.0, 1.0, 3.0], [0.0, 2.0, 3.0])
        a, _ = t.lookup(np.array([x - 1e-9]))
        b, _ = t.lookup(np.array([x + 1e-9]))
        assert abs(a[0] - b[0]) < 1e-8


class TestConvert:
    def test_viscosity_cp(self):
        d = convert_to_si(parse_deck(table1_deck()))
        assert d.water.viscosity == pytest.approx(5.0e-4, rel=1e-15)

    def test_millidarcy(self):
        d = convert_to_si(parse_deck(table1_deck()))
        assert d.rock.permx[0] == pytest.approx(9.869233e-14, rel=1e-15)

    def test_published_factors(self):
        assert units.factor("FIELD", "pressure") == 6894.757
        assert units.factor("METRIC", "pressure") == 1e5
        assert units.factor("FIELD", "length") == 0.3048
        assert units.factor("FIELD", "time") == 86400.0

    def test_si_is_identity(self):
        d = parse_deck(small_deck_text())
        assert convert_to_si(d) == d

    @pytest.mark.parametrize("make", [table1_deck, table2_deck])
    def test_idempotent(self, make):
        once = convert_to_si(parse_deck(make()))
        assert convert_to_si(once) == once
        assert once.unit_system == "SI"

    def test_field_pressure(self):
        d = convert_to_si(parse_deck(table2_deck()))
        raw = parse_deck(table2_deck())
        assert d.init.pressure == pytest.approx(raw.init.pressure * 6894.757)


class TestValidate:
    def test_table1_is_clean(self):
        assert validate(parse_deck(table1_deck())) == []

    def test_perforation_out_of_range(self):
        d = parse_deck(table1_deck().replace("PROD 15 1 1 Z", "PROD 16 1 1 Z"))
        assert any("perforation out of range" in m for m in messages(validate(d)))

    def test_ipv_range(self):
        d = parse_deck(table1_deck().replace("PLYROCK 0.15", "PLYROCK 1.2"))
        assert "IPV must lie in [0,1)" in messages(validate(d))

    def test_undefined_well_in_schedule(self):
        d = parse_deck(table1_deck().replace("POLYMER INJ 6", "POLYMER XX 6"))
        assert any("undefined well" in m for m in messages(validate(d)))

    def test_rrf_below_one(self):
        d = parse_deck(table1_deck().replace("PLYROCK 0.15 2.67", "PLYROCK 0.15 0.5"))
        assert "RRF must be >= 1" in messages(validate(d))

    @pytest.mark.parametrize(
        "old,new",
        [("PLYROCK 0.15", "PLYROCK 1.2"), ("PROD 15 1 1 Z", "PROD 16 1 1 Z"), ("PORO 0.5", "PORO -0.5")],
    )
    def test_same_diagnostics_after_conversion(self, old, new):
        d = parse_deck(table1_deck().replace(old, new))
        assert set(validate(d)) == set(validate(convert_to_si(d)))


deck_params = st.fixed_dictionaries(
    {
        "nx": st.integers(1, 4),
        "ny": st.integers(1, 3),
        "nz": st.integers(1, 2),
        "perm": st.floats(1e-15, 1e-11),
        "poro": st.floats(0.01, 0.5),
    }
)


class TestRoundTrip:
    @settings(max_examples=30, deadline=None)
    @given(deck_params)
    def test_parse_serialize_parse(self, kw):
        d = parse_deck(small_deck_text(**kw))
        assert parse_deck(serialize_deck(d)) == d

    @pytest.mark.parametrize("make", [table1_deck, table2_deck])
    def test_sample_decks(self, make):
        d = parse_deck(make())
        assert parse_deck(serialize_deck(d)) == d
        si = convert_to_si(d)
        assert parse_deck(serialize_deck(si)) == si
