from collections.abc import Hashable, Mapping
from typing import Any, Generic, Optional, TypeVar


SettingName = TypeVar("SettingName", bound=Hashable)


class SettingsStack(Generic[SettingName]):
    """Layered bindings; the most recently pushed layer wins.

    Layers are pushed in precedence order (defaults, config file, flags).
    Each binding remembers the label of the layer that supplied it.
    """

    _bindings: dict[SettingName, list[tuple[str, Any]]]

    def __init__(
            self,
            defaults: Optional[Mapping[SettingName, Any]] = None
    ):
        self._bindings = dict()
        if defaults is not None:
            self.push("default", defaults)

    def __len__(self) -> int:
        return len(self._bindings)

    def __contains__(self, name: object) -> bool:
        return name in self._bindings

    def __getitem__(self, name: SettingName) -> Any:
        return self._bindings[name][-1][1]

    def get(self, name: SettingName, default: Any = None) -> Any:
        if name in self._bindings:
            return self[name]
        return default

    def source(self, name: SettingName) -> str:
        return self._bindings[name][-1][0]

    def push(self, label: str, layer: Mapping[SettingName, Any]):
        # None means "not given" at this layer
        for name, value in layer.items():
            if value is not None:
                self._bindings.setdefault(name, []).append((label, value))

    def resolved(self) -> dict[SettingName, Any]:
        return {name: self[name] for name in self._bindings}

    def sources(self) -> dict[SettingName, str]:
        return {name: self.source(name) for name in self._bindings}


__all__ = ["SettingsStack", "SettingName"]
