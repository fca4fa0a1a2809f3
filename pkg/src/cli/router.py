import argparse
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

Handler = Callable[[argparse.Namespace], int]


def arg(*flags: str, **kwargs) -> Tuple[Tuple[str, ...], dict]:
    """Описание аргумента подкоманды в виде параметров add_argument"""
    return flags, kwargs


@dataclass
class Command:
    name: str
    help: str
    handler: Handler
    arguments: List[Tuple[Tuple[str, ...], dict]] = field(default_factory=list)


class Router:
    """Регистрация подкоманд декоратором, по аналогии с роутером обработчиков сообщений"""

    def __init__(self):
        self.commands: Dict[str, Command] = {}

    def command(self, name: str, help: str, *arguments: Tuple[Tuple[str, ...], dict]):
        def decorator(func: Handler) -> Handler:
            if name in self.commands:
                raise ValueError(f"Команда {name} уже зарегистрирована")
            self.commands[name] = Command(name=name, help=help, handler=func, arguments=list(arguments))
            return func
        return decorator

    def include(self, subparsers) -> None:
        for command in self.commands.values():
            parser = subparsers.add_parser(command.name, help=command.help, description=command.help)
            for flags, kwargs in command.arguments:
                parser.add_argument(*flags, **kwargs)
            parser.set_defaults(handler=command.handler, command=command.name)
