from __future__ import annotations

from abc import ABC, abstractmethod

from ..verify_report import VerifyReport


class BaseVerifier(ABC):
    """A named group of oracle checks."""
    name: str = "base"

    def can_handle(self, group: str) -> bool:
        return group in ("all", self.name)

    @abstractmethod
    def verify(self) -> VerifyReport:
        ...
