# Eryn Wells <eryn@erynwells.me>

'''
Run configuration parameters.

A run is configured by an INI-style file with one section per concern and
`key = value` lines:

    [search]
    method = admm
    max_iters = 300

    [speech]
    dynamic_range = 8

Command line overrides have the form `section.key=value` and are applied on top
of the file.
'''

import configparser
import dataclasses
from dataclasses import dataclass, field
from os import PathLike
from typing import Iterable, List, Optional, Union

from . import log
from .codec import CodecConfig
from .errors import ConfigurationError
from .model import GeneratorModel
from .objectives import ImageObjective, ImageObjectiveConfig, SpeechObjective, SpeechObjectiveConfig
from .pipeline import ImagePipeline, ImagePipelineConfig, PipelineError, SpeechPipelineConfig
from .search import SearchConfig

OBJECTIVE_KINDS = ('combined', 'feature', 'mse')

_TRUE = ('1', 'yes', 'true', 'on')
_FALSE = ('0', 'no', 'false', 'off')


@dataclass
class ObjectiveSettings:
    '''
    Objective selection and weights, shared by image and speech runs.

    ### Attributes
    `kind` : `str`
        `combined`, `mse`, or for speech only `feature`
    `lambda3`, `gamma`, `msssim_scales` : image objective weights and MS-SSIM scale count
    `use_discriminator` : `bool`
        Add the discriminator term to the image objective. Needs a discriminator model.
    `lambda4` : `float`
        Weight of MSE in the speech objective
    `feature_layers` : `List[int]`
        Feature network layers compared by the speech objective; empty for every convolution
    '''

    kind: str = 'combined'
    lambda3: float = 1.0
    gamma: float = 0.1
    msssim_scales: int = 5
    use_discriminator: bool = False
    lambda4: float = 10.0
    feature_layers: List[int] = field(default_factory=list)

    def validate(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ConfigurationError(f'objective.kind must be one of {", ".join(OBJECTIVE_KINDS)}, got {self.kind!r}')
        for name in ('lambda3', 'gamma', 'lambda4'):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f'objective.{name} must be nonnegative, got {getattr(self, name)}')
        if self.msssim_scales < 1:
            raise ConfigurationError(f'objective.msssim_scales must be at least 1, got {self.msssim_scales}')

    def image_objective(self, discriminator: Optional[GeneratorModel] = None) -> ImageObjective:
        if self.kind == 'feature':
            raise ConfigurationError('the feature objective is only defined for speech')
        return ImageObjective(ImageObjectiveConfig(kind=self.kind,
                                                   lambda3=self.lambda3,
                                                   gamma=self.gamma,
                                                   msssim_scales=self.msssim_scales,
                                                   use_discriminator=self.use_discriminator,
                                                   discriminator=discriminator))

    def speech_objective(self, feature_net: Optional[GeneratorModel] = None) -> SpeechObjective:
        return SpeechObjective(SpeechObjectiveConfig(kind=self.kind,
                                                     lambda4=self.lambda4,
                                                     feature_net=feature_net,
                                                     feature_layer_indices=list(self.feature_layers)))


@dataclass
class RunConfig:
    '''
    Configuration of a command line run

    ### Attributes

    search : SearchConfig
        Latent search method and hyperparameters
    image : ImagePipelineConfig
        Generator resolution for images
    speech : SpeechPipelineConfig
        Speech analysis parameters
    objective : ObjectiveSettings
        Which objective to minimize
    codec : CodecConfig
        Entropy coding mode and batch concurrency
    '''

    search: SearchConfig = field(default_factory=SearchConfig)
    image: ImagePipelineConfig = field(default_factory=ImagePipelineConfig)
    speech: SpeechPipelineConfig = field(default_factory=SpeechPipelineConfig)
    objective: ObjectiveSettings = field(default_factory=ObjectiveSettings)
    codec: CodecConfig = field(default_factory=CodecConfig)

    SECTIONS = ('search', 'image', 'speech', 'objective', 'codec')

    @classmethod
    def from_file(cls, path: Union[str, PathLike]) -> 'RunConfig':
        '''Read a configuration file. Keys it doesn't mention keep their defaults.'''
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding='utf-8') as config_file:
                parser.read_file(config_file)
        except OSError as error:
            raise ConfigurationError(f'cannot read {path}: {error.strerror}') from error
        except configparser.Error as error:
            raise ConfigurationError(f'{path} is not a valid configuration file: {error}') from error

        config = cls()
        for section in parser.sections():
            for key, value in parser.items(section):
                config.set(section, key, value)

        log.CONFIG.info('Loaded configuration from %s', path)
        return config

    def set(self, section: str, key: str, text: str):
        '''Set one value from its text form, converting it to the type of the field'''
        if section not in self.SECTIONS:
            raise ConfigurationError(f'unknown configuration section [{section}]')
        target = getattr(self, section)
        names = {f.name for f in dataclasses.fields(target)}
        if key not in names:
            raise ConfigurationError(f'unknown configuration key {section}.{key}')
        setattr(target, key, _convert(f'{section}.{key}', getattr(target, key), text))

    def apply_overrides(self, overrides: Iterable[str]):
        '''Apply `section.key=value` overrides in order'''
        for override in overrides:
            name, separator, value = override.partition('=')
            section, dot, key = name.strip().partition('.')
            if not separator or not dot:
                raise ConfigurationError(f'override {override!r} is not of the form section.key=value')
            self.set(section, key.strip(), value.strip())

    def validate(self):
        '''Range-check every value before any work starts'''
        self.search.validate()
        self.objective.validate()
        self.codec.validate()
        try:
            ImagePipeline(self.image)
            self.speech.validate()
        except PipelineError as error:
            raise ConfigurationError(error.message) from error


def _convert(name: str, current, text: str):
    '''Parse `text` as the type of `current`'''
    text = text.strip()
    try:
        match current:
            case bool():
                lowered = text.lower()
                if lowered in _TRUE:
                    return True
                if lowered in _FALSE:
                    return False
                raise ValueError(text)
            case int():
                return int(text)
            case float():
                return float(text)
            case list():
                return [int(item) for item in text.replace(',', ' ').split()]
            case _:
                return text
    except ValueError as error:
        raise ConfigurationError(f'{name} has invalid value {text!r}') from error
