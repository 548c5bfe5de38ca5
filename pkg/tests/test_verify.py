from __future__ import annotations

import pytest

from core.config import AppConfig, EvalConfig
from core.errors import ConfigError
from core.verifiers import ALL_VERIFIERS, GROUPS
from core.verify_engine import structural_checks, verify
from core.verify_report import VerifyReport


def failures(rep: VerifyReport) -> str:
    return "; ".join(f"{i.name}: {i.message}" for i in rep.failed)


class TestGroups:
    def test_group_names(self):
        assert GROUPS == ("dsp", "formulas", "gradients")
        assert all(v.can_handle("all") for v in ALL_VERIFIERS)

    @pytest.mark.parametrize("group", ["dsp", "formulas", "gradients"])
    def test_group_passes(self, group):
        rep = verify([group])
        assert rep.ok, failures(rep)
        assert any(item.name.startswith("structure.") for item in rep.items)

    def test_only_requested_group_runs(self):
        rep = verify(["formulas"])
        assert not any(item.name.startswith("grad.") for item in rep.items)

    def test_unknown_group(self):
        with pytest.raises(ConfigError):
            verify(["topology"])


class TestStructural:
    def test_defaults_pass(self):
        rep = structural_checks()
        assert rep.ok, failures(rep)

    def test_unsorted_strata_flagged(self):
        cfg = AppConfig(eval=EvalConfig(strata=(0.6, 0.2)))
        rep = structural_checks(cfg)
        assert not rep.ok
        assert [i.name for i in rep.failed] == ["structure.strata_sorted"]


class TestReport:
    def test_extend_propagates_failure(self):
        a = VerifyReport(ok=True, kind="mixed", summary="outer")
        b = VerifyReport(ok=True, kind="oracle", summary="inner")
        b.add("x", False, "broken")
        a.extend(b)
        assert not a.ok and a.to_dict()["items"] == [{"name": "x", "ok": False, "message": "broken"}]
