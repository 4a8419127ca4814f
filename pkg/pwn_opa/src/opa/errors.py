class OPAError(Exception):
    ''' Base class for every error raised by the opa package. '''


class ConfigError(OPAError, ValueError):
    ''' Missing or invalid configuration values. '''


class DatasetError(OPAError, ValueError):
    ''' Problems generating, reading or validating satisfaction data. '''


class UnrepairedAllocationError(OPAError, ValueError):
    ''' An allocation with a resource block owned by more than one user reached evaluation. '''


class DegenerateLabelsError(OPAError, ValueError):
    ''' Training data lacks at least one satisfaction level. '''


class HarnessError(OPAError, RuntimeError):
    ''' Experiment preconditions are not met. '''
