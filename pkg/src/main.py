#!/usr/bin/env python3
import argparse
import logging
import sys
from typing import List, Optional

from src.config.config import settings
from src.config.logs_config import setup_logging
from src.cli.handlers.handlers import router
from src.services.errors import DataError, UsageError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class ArgumentParser(argparse.ArgumentParser):
    """Ошибки разбора аргументов завершают работу с кодом 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: ошибка: {message}\n')


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog='morphkit',
        description='Предотбор пар для морфинга, калибровка FRS, метрики уязвимости и D-MAD по эмбеддингам',
    )
    parser.add_argument('--log-level', default=settings.logger_level)
    parser.add_argument('--log-file', default=settings.logger_file)

    subparsers = parser.add_subparsers(dest='command', metavar='COMMAND')
    subparsers.required = True
    router.include(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging(args.log_level, args.log_file)
    logger = logging.getLogger(__name__)
    logger.info(f'Команда {args.command}')

    try:
        code = args.handler(args)
    except UsageError as e:
        logger.error(f'Неверные аргументы: {e}')
        return EXIT_USAGE
    except FileNotFoundError as e:
        logger.error(str(e))
        return EXIT_DATA
    except DataError as e:
        logger.error(f'Ошибка данных: {e}')
        return EXIT_DATA
    except ValueError as e:
        # недопустимые значения параметров, не пойманные при разборе аргументов
        logger.error(f'Неверные аргументы: {e}')
        return EXIT_USAGE

    logger.info(f'Команда {args.command} завершена')
    return code


if __name__ == '__main__':
    sys.exit(main())
