# Eryn Wells <eryn@erynwells.me>

'''
Logging for the codec.

Every subsystem logs to its own logger under `latentcodec`. Subsystem names
are the same ones errors report in their `module=` field, so a diagnostic
points straight at the logger to turn up. Levels come from
`logging_config.json`; command line verbosity raises them afterwards.
'''

import json
import logging
import logging.config
import os
import os.path
from typing import Dict, Iterator, Optional

# These are re-imports so clients of this module don't have to also import logging
# pylint: disable=unused-import
from logging import CRITICAL, DEBUG, ERROR, FATAL, INFO, NOTSET, WARN, WARNING

PACKAGE = 'latentcodec'
CONFIG_FILE_NAME = 'logging_config.json'
CONFIG_ENVIRONMENT_VARIABLE = 'LATENTCODEC_LOGGING_CONFIG'
DEFAULT_FORMAT = '%(asctime)s %(name)s: %(message)s'


def _log_name(*components):
    return '.'.join([PACKAGE] + list(components))


ROOT = logging.getLogger(_log_name())
AUTODIFF = logging.getLogger(_log_name('autodiff'))
MODEL = logging.getLogger(_log_name('model'))
OBJECTIVES = logging.getLogger(_log_name('objectives'))
QUANT = logging.getLogger(_log_name('quant'))
SEARCH = logging.getLogger(_log_name('search'))
SEARCH_ITER = logging.getLogger(_log_name('search', 'iterations'))
ENTROPY = logging.getLogger(_log_name('entropy'))
PIPELINE = logging.getLogger(_log_name('pipeline'))
CODEC = logging.getLogger(_log_name('codec'))
CONFIG = logging.getLogger(_log_name('config'))
BENCH = logging.getLogger(_log_name('bench'))
CLI = logging.getLogger(_log_name('cli'))

SUBSYSTEMS: Dict[str, logging.Logger] = {
    'autodiff': AUTODIFF,
    'model': MODEL,
    'objectives': OBJECTIVES,
    'quant': QUANT,
    'search': SEARCH,
    'entropy': ENTROPY,
    'pipeline': PIPELINE,
    'codec': CODEC,
    'config': CONFIG,
    'bench': BENCH,
    'cli': CLI,
}


def subsystem(name: str) -> logging.Logger:
    '''The logger of the subsystem an error names in its `module` field, or the package logger'''
    return SUBSYSTEMS.get(name, ROOT)


def verbosity_level(verbosity: int) -> Optional[int]:
    '''The level `verbosity` `--verbose` flags ask for, or `None` to leave levels alone'''
    if verbosity <= 0:
        return None
    return DEBUG if verbosity > 1 else INFO


def set_verbosity(verbosity: int):
    '''
    Raise the package logger and every subsystem logger to the level
    `verbosity` asks for. Loggers already more verbose are left as they are.
    Per-iteration search logging only opens up at DEBUG.
    '''
    level = verbosity_level(verbosity)
    if level is None:
        return

    for logger in [ROOT, *SUBSYSTEMS.values()]:
        if logger.level == NOTSET or logger.level > level:
            logger.setLevel(level)
    if level == DEBUG:
        SEARCH_ITER.setLevel(DEBUG)


def walk_up_directories_of_path(path: str) -> Iterator[str]:
    '''
    Walk up a path, yielding each directory, until the root of the filesystem is
    found.

    ### Parameters
    `path`: `str`
        The starting path

    ### Returns
    Yields each ancestor directory until the root directory of the filesystem is
    reached.
    '''
    while path and path != '/':
        if os.path.isdir(path):
            yield path
        path = os.path.dirname(path)


def find_logging_config() -> Optional[str]:
    '''
    Walk up the filesystem from this module to find a logging_config.json

    ### Returns
    The path to a logging configuration file, or `None` if no such file was found
    '''
    for parent_dir in walk_up_directories_of_path(__file__):
        possible_logging_config_file = os.path.join(parent_dir, CONFIG_FILE_NAME)
        if os.path.isfile(possible_logging_config_file):
            return possible_logging_config_file
    return None


def logging_config_path(config_file: Optional[str] = None) -> Optional[str]:
    '''
    The logging configuration to load: `config_file` if given, then the file
    named by `LATENTCODEC_LOGGING_CONFIG`, then the nearest logging_config.json
    above this module.
    '''
    return config_file or os.environ.get(CONFIG_ENVIRONMENT_VARIABLE) or find_logging_config()


def init(config_file: Optional[str] = None, verbosity: int = 0):
    '''
    Set up the logging system by (preferrably) reading a logging configuration file.

    ### Parameters
    `config_file`: Optional[str]
        Path to a file containing a Python logging configuration in JSON
    `verbosity`: int
        Number of `--verbose` flags given on the command line. One raises the
        package loggers to INFO, two or more to DEBUG.
    '''
    path = logging_config_path(config_file)

    if path and os.path.isfile(path):
        with open(path, encoding='utf-8') as logging_config_file:
            logging.config.dictConfig(json.load(logging_config_file))
        ROOT.debug('Loaded logging configuration from %s', path)
    else:
        root_logger = logging.getLogger('')
        root_logger.setLevel(WARNING)

        stderr_handler = logging.StreamHandler()
        stderr_handler.setFormatter(logging.Formatter(DEFAULT_FORMAT))

        root_logger.addHandler(stderr_handler)
        ROOT.debug("Couldn't find logging configuration at %s; using default configuration", path)

    set_verbosity(verbosity)
