"""Exception types shared by all modules."""
from __future__ import annotations


class ShapeRegError(Exception):
    """Base class for every error raised by shapereg."""


class ImageLoadError(ShapeRegError):
    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")


class ImageNotFoundError(ImageLoadError):
    def __init__(self, path: str) -> None:
        super().__init__(path, "file not found")


class ImageFormatError(ImageLoadError):
    def __init__(self, path: str, message: str, offset: int | None = None) -> None:
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(path, message)


class ContractViolation(ShapeRegError, ValueError):
    """An operation was called outside its precondition."""


class DimensionMismatchError(ContractViolation):
    pass


class PixelOutsideRadiusError(ContractViolation):
    pass


class ConfigError(ShapeRegError):
    pass
