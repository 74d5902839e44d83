from pydantic import BaseModel, ValidationError

from .exceptions import ConfigurationError


class ValidatedModel(BaseModel):
    """
    BaseModel that reports invalid constructor arguments as ConfigurationError,
    so user-supplied specs fail with the usage exit code.
    """

    def __init__(self, **data):
        try:
            super().__init__(**data)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid {type(self).__name__}: {e}") from e
