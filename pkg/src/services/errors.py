"""Исключения инструментария.

DataError и наследники означают проблему во входных данных (код выхода 2),
UsageError - неверный вызов (код выхода 1).
"""
from typing import Optional


class DataError(ValueError):
    """Ошибка входных данных"""


class MalformedRecordError(DataError):
    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f'строка {line_no}: {message}'
        super().__init__(message)


class DimensionMismatchError(MalformedRecordError):
    pass


class DuplicateRecordError(MalformedRecordError):
    pass


class NonFiniteEmbeddingError(MalformedRecordError):
    pass


class ZeroNormError(DataError):
    pass


class EmptyInputError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class AntipodalParentsError(DataError):
    pass


class UsageError(Exception):
    """Неверные аргументы команды"""
