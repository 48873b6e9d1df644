"""
Run configuration: one JSON object with flat dotted keys, e.g.::

    {"seed": 7, "train.objective": "rbsh", "train.bits": 32, "cf.epochs": 10,
     "corpus.vocab_size": 5000, "paths.out": "runs/rbsh32"}

Command-line flags override file values. The flattened configuration is embedded in
every artifact written by the command-line tool.
"""

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Optional, Tuple

from .cfhash import CFConfig
from .codefile import PathLike, read_json
from .corpus import DEFAULT_VOCAB_SIZE, TF_MODES
from .errors import FormatError, UsageError
from .hashtrain import TrainConfig


@dataclass
class CorpusOptions:
    vocab_size: int = DEFAULT_VOCAB_SIZE
    tf_mode: str = 'raw'
    split: Tuple[float, float, float] = (0.8, 0.1, 0.1)

    def validate(self) -> 'CorpusOptions':
        if self.vocab_size < 1:
            raise UsageError(f"vocab_size must be positive (given: {self.vocab_size})")
        if self.tf_mode not in TF_MODES:
            raise UsageError(f"tf_mode must be one of {TF_MODES} (given: {self.tf_mode!r})")
        self.split = tuple(self.split)  # type: ignore
        return self


_SECTIONS = {'train': TrainConfig, 'cf': CFConfig, 'corpus': CorpusOptions}


@dataclass
class RunConfig:
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    cf: CFConfig = field(default_factory=CFConfig)
    corpus: CorpusOptions = field(default_factory=CorpusOptions)
    paths: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_flat(cls, values: Dict[str, Any]) -> 'RunConfig':
        return cls().with_overrides(values)

    @classmethod
    def load(cls, path: Optional[PathLike]) -> 'RunConfig':
        if path is None:
            return cls()
        values = read_json(path)
        if not isinstance(values, dict):
            raise FormatError(f"Config {path} must hold a JSON object")
        return cls.from_flat(values)

    def with_overrides(self, values: Dict[str, Any]) -> 'RunConfig':
        """
        A copy with the given dotted keys replaced; ``seed`` reseeds every section.
        ``None`` values are ignored so unset command-line flags keep the file values.
        """
        sections: Dict[str, Dict[str, Any]] = {name: {} for name in _SECTIONS}
        paths = dict(self.paths)
        seed = self.seed
        for key, value in values.items():
            if value is None:
                continue
            if key == 'seed':
                seed = int(value)
                continue
            section, _, name = key.partition('.')
            if section == 'paths' and name:
                paths[name] = str(value)
            elif section in _SECTIONS and name in {f.name for f in fields(_SECTIONS[section])}:
                sections[section][name] = value
            else:
                raise UsageError(f"Unknown configuration key {key!r}")

        train = replace(self.train, **sections['train'])
        cf = replace(self.cf, **sections['cf'])
        if 'seed' in values and values['seed'] is not None:
            train = replace(train, seed=seed) if 'seed' not in sections['train'] else train
            cf = replace(cf, seed=seed) if 'seed' not in sections['cf'] else cf
        corpus = replace(self.corpus, **sections['corpus'])

        config = RunConfig(seed, train, cf, corpus, paths)
        config.train.validate()
        config.cf.validate()
        config.corpus.validate()
        return config

    def to_dict(self) -> Dict[str, Any]:
        """
        The flat dotted form, keys sorted.
        """
        flat: Dict[str, Any] = {'seed': self.seed}
        for section in _SECTIONS:
            for name, value in asdict(getattr(self, section)).items():
                flat[f"{section}.{name}"] = list(value) if isinstance(value, tuple) else value
        for name, value in self.paths.items():
            flat[f"paths.{name}"] = value
        return dict(sorted(flat.items()))
