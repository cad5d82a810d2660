from src.lib.settings import SettingsStack


def test_later_layers_win_and_remember_their_source():
    settings = SettingsStack({"epsilon": 0.01, "seed": 0, "folds": None})
    settings.push("config:cfg.json", {"epsilon": 0.02, "seed": 5})
    settings.push("flags", {"epsilon": 0.05, "seed": None})
    assert settings["epsilon"] == 0.05
    assert settings.source("epsilon") == "flags"
    assert settings["seed"] == 5
    assert settings.source("seed") == "config:cfg.json"
    assert "folds" not in settings
    assert settings.get("folds", 3) == 3
    assert len(settings) == 2
    assert settings.resolved() == {"epsilon": 0.05, "seed": 5}
    assert settings.sources() == {"epsilon": "flags", "seed": "config:cfg.json"}
