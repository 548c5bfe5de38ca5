from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List


@dataclass
class CheckItem:
    name: str
    ok: bool
    message: str


@dataclass
class VerifyReport:
    ok: bool
    kind: str                    # "structural", "oracle", "gradient", "mixed"
    summary: str
    items: List[CheckItem] = field(default_factory=list)
    details: Dict[str, Any] = field(default_factory=dict)

    def add(self, name: str, ok: bool, message: str) -> None:
        self.items.append(CheckItem(name=name, ok=bool(ok), message=message))
        if not ok:
            self.ok = False

    def extend(self, other: "VerifyReport") -> None:
        for item in other.items:
            self.add(item.name, item.ok, item.message)
        self.details.update(other.details)

    @property
    def failed(self) -> List[CheckItem]:
        return [i for i in self.items if not i.ok]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "kind": self.kind,
            "summary": self.summary,
            "items": [{"name": i.name, "ok": i.ok, "message": i.message} for i in self.items],
        }
