import copy
import logging
import os

import yaml

from opa.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', '..', 'config', 'opa_params.yaml')

_MISSING = object()


def load_params(path=None):

    '''
    Loads a sectioned YAML parameter file into a nested dictionary.

    Arguments:
        path    - Path to the parameter file, defaults to config/opa_params.yaml
    '''

    path = path or DEFAULT_CONFIG

    try:
        with open(path, 'r') as f:
            params = yaml.safe_load(f)

    except (IOError, OSError) as e:
        raise ConfigError("Cannot read configuration file {}: {}".format(path, e)) from e

    except yaml.YAMLError as e:
        raise ConfigError("Malformed configuration file {}: {}".format(path, e)) from e

    if not isinstance(params, dict):
        raise ConfigError("Configuration file {} holds no sections.".format(path))

    logger.debug("Parameter file: %s", os.path.normpath(path))

    return params


def get_param(params, name, default=_MISSING):

    '''
    Looks up a slash-separated parameter name, e.g. "/network/num_rbs".

    Raises ConfigError when the value is missing and no default is given.
    '''

    keys = [k for k in name.split('/') if k]
    value = params

    try:
        for key in keys:
            value = value[key]

    except (KeyError, TypeError):
        if default is not _MISSING:
            return default

        section = keys[0] if keys else name
        raise ConfigError("Missing {} parameters ({}). Check the configuration file.".format(section, name)) from None

    return value


def apply_overrides(params, overrides):

    ''' Returns a deep copy of params with a nested overrides mapping merged in. '''

    merged = copy.deepcopy(params)

    def merge(target, source):
        for key, value in source.items():
            if isinstance(value, dict) and isinstance(target.get(key), dict):
                merge(target[key], value)

            else:
                target[key] = value

    merge(merged, overrides)

    return merged
