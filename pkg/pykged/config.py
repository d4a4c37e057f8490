import copy
import os
import yaml
from pykged.errors import ConfigError

BACKENDS = ("http", "mock", "oracle")
PIPELINES = ("kg", "baseline")

# everything a run needs to be replayed. Paths are resolved against `workspace` when relative.
DEFAULTS = {
    "kg_snapshot": None,
    "dataset": None,
    "backend": "mock",
    "pipeline": "kg",
    "k_max": 10,
    "desc_limit": 250,
    "context_window": 2000,
    "max_in_flight": 4,
    "output_dir": "runs/latest",
    "offline": False,
    "template_version": "v1",
    "multi_select": False,
    "include_descriptions": False,
    "mock_script": None,
    "description_cache": None,
    "description_endpoint": "https://en.wikipedia.org/api/rest_v1/page/summary/{entity}",
    "description_field": "extract",
    "endpoint": "https://api.openai.com/v1/chat/completions",
    "model": "gpt-3.5-turbo-1106",
    "api_key_env": "PYKGED_API_KEY",
    "retries": 3,
    "backoff": 1.0,
    "timeout": 60.0,
    "requests_per_second": 0.0,
    "error_tags": None,
    "write_tsv": False,
    "workspace": ".",
}

PATH_KEYS = ("kg_snapshot", "dataset", "output_dir", "mock_script", "description_cache", "error_tags")

class RunConfig:
    def __init__(self, **overrides) -> None:

        """
        Holds every knob of a run. Defaults follow the published settings: candidate sets of 10,
        descriptions truncated at 250 characters, temperature 0 on the HTTP backend.

        Args:
            **overrides: any key of `DEFAULTS`.

        Examples:

            >>> from pykged.config import RunConfig
            >>> config = RunConfig(kg_snapshot = "kg.tsv", backend = "oracle")
            >>> config.set_config("k_max", 5)
            >>> config.get_config("desc_limit")
            250
        """

        self.config = copy.deepcopy(DEFAULTS)
        for key in overrides:
            self.set_config(key, overrides[key])

    @classmethod
    def from_yaml(cls, path, **overrides):
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        if type(data) != dict:
            raise ConfigError("config file {} must hold a mapping".format(path))
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def set_config(self, key, value):
        if key not in self.config:
            raise ConfigError("key {!r} not found in config".format(key))
        self.config[key] = value

    def get_config(self, key):
        if key not in self.config:
            raise ConfigError("key {!r} not found in config".format(key))
        return self.config[key]

    def __getitem__(self, key):
        return self.get_config(key)

    def resolve(self, key):
        value = self.config[key]
        if value is None or os.path.isabs(value):
            return value
        return os.path.join(self.config["workspace"], value)

    def api_key(self):
        return os.environ.get(self.config["api_key_env"])

    def validate(self, selector = True):
        # selector = False skips the backend checks, for commands that never ask a selector
        c = self.config
        if c["backend"] not in BACKENDS:
            raise ConfigError("backend must be one of {}, got {!r}".format(BACKENDS, c["backend"]))
        if c["pipeline"] not in PIPELINES:
            raise ConfigError("pipeline must be one of {}, got {!r}".format(PIPELINES, c["pipeline"]))
        for key in ("k_max", "desc_limit", "context_window", "max_in_flight"):
            if type(c[key]) != int or c[key] < 1:
                raise ConfigError("{} must be a positive integer, got {!r}".format(key, c[key]))
        if type(c["retries"]) != int or c["retries"] < 0:
            raise ConfigError("retries must be a non-negative integer")
        if selector and c["offline"] and c["backend"] == "http":
            raise ConfigError("offline runs only support the mock and oracle backends")
        if selector and c["backend"] == "mock" and c["mock_script"] is None:
            raise ConfigError("the mock backend needs a mock_script")
        if "{entity}" not in c["description_endpoint"]:
            raise ConfigError("description_endpoint must contain an {entity} placeholder")
        return self

    def to_dict(self):
        return dict(sorted(self.config.items()))
