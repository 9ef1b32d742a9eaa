"""Exception hierarchy shared across the package.

Exit codes mirror the CLI contract: 2 config, 3 data, 4 model/schema.
"""


class FlowTMError(Exception):
    """Base class for all flowtm errors."""

    exit_code = 1


class ConfigError(FlowTMError):
    """Invalid parameter or option combination."""

    exit_code = 2


class DataError(FlowTMError):
    """Invalid input data (bad values, empty dataset, impossible split)."""

    exit_code = 3


class SchemaError(FlowTMError):
    """Column set or feature layout does not match what was expected."""

    exit_code = 4


class ModelFormatError(FlowTMError):
    """Model file is corrupt or has an unsupported format version."""

    exit_code = 4


class StructuralError(FlowTMError):
    """Internal structure violated (index out of range, layout mismatch)."""

    exit_code = 4
