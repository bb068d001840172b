# Eryn Wells <eryn@erynwells.me>

import json
import logging

import pytest

from latentcodec import log
from latentcodec.errors import ConfigurationError
from latentcodec.quantization import CodebookError


@pytest.fixture
def restore_levels():
    '''Put every package logger back the way the test found it'''
    loggers = [log.ROOT, log.SEARCH_ITER, *log.SUBSYSTEMS.values()]
    levels = {logger.name: logger.level for logger in loggers}
    root_handlers = list(logging.getLogger('').handlers)
    package_handlers = list(log.ROOT.handlers)
    yield
    for logger in loggers:
        logger.setLevel(levels[logger.name])
    logging.getLogger('').handlers[:] = root_handlers
    log.ROOT.handlers[:] = package_handlers


def test_subsystems_match_error_modules():
    assert log.subsystem(CodebookError.module) is log.QUANT
    assert log.subsystem(ConfigurationError.module) is log.CONFIG
    assert log.subsystem('internal') is log.ROOT
    assert all(logger.name == f'latentcodec.{name}' for name, logger in log.SUBSYSTEMS.items())


def test_verbosity_level():
    assert log.verbosity_level(0) is None
    assert log.verbosity_level(1) == log.INFO
    assert log.verbosity_level(2) == log.DEBUG
    assert log.verbosity_level(5) == log.DEBUG


def test_set_verbosity_raises_quiet_loggers(restore_levels):
    log.AUTODIFF.setLevel(log.WARN)
    log.SEARCH_ITER.setLevel(log.ERROR)
    log.BENCH.setLevel(log.DEBUG)

    log.set_verbosity(1)
    assert log.AUTODIFF.level == log.INFO
    assert log.BENCH.level == log.DEBUG
    assert log.SEARCH_ITER.level == log.ERROR

    log.set_verbosity(2)
    assert log.AUTODIFF.level == log.DEBUG
    assert log.SEARCH_ITER.level == log.DEBUG


def test_set_verbosity_zero_changes_nothing(restore_levels):
    log.QUANT.setLevel(log.ERROR)
    log.set_verbosity(0)
    assert log.QUANT.level == log.ERROR


def test_logging_config_path(tmp_path, monkeypatch):
    explicit = tmp_path / 'explicit.json'
    named = tmp_path / 'named.json'

    monkeypatch.setenv(log.CONFIG_ENVIRONMENT_VARIABLE, str(named))
    assert log.logging_config_path(str(explicit)) == str(explicit)
    assert log.logging_config_path() == str(named)

    monkeypatch.delenv(log.CONFIG_ENVIRONMENT_VARIABLE)
    assert log.logging_config_path() == log.find_logging_config()


def test_init_applies_verbosity_over_the_file(tmp_path, restore_levels):
    path = tmp_path / 'logging.json'
    path.write_text(json.dumps({
        'version': 1,
        'disable_existing_loggers': False,
        'loggers': {'latentcodec.quant': {'level': 'ERROR'}},
    }))

    log.init(str(path))
    assert log.QUANT.level == log.ERROR

    log.init(str(path), verbosity=1)
    assert log.QUANT.level == log.INFO
