"""
Command routing.
A small counterpart of an API router: command modules register handlers with
a decorator, and the registry turns each handler's config model into
argparse flags.
"""

import argparse
import typing
from typing import Any, Callable, List, Literal, NamedTuple, Optional, Type

from pydantic import BaseModel


class Command(NamedTuple):
    name: str
    help: str
    config: Type[BaseModel]
    handler: Callable[[BaseModel], Optional[int]]


class CommandRouter:
    """Collects commands; routers nest with include_router"""

    def __init__(self, tags: Optional[List[str]] = None):
        self.tags = tags or []
        self.commands: List[Command] = []

    def command(self, name: str, config: Type[BaseModel], help: str = ""):
        def decorator(func):
            self.commands.append(Command(name, help or (func.__doc__ or "").strip(), config, func))
            return func
        return decorator

    def include_router(self, router: "CommandRouter"):
        self.commands.extend(router.commands)

    def get(self, name: str) -> Command:
        for command in self.commands:
            if command.name == name:
                return command
        raise KeyError(name)


def _unwrap_optional(annotation: Any) -> Any:
    if typing.get_origin(annotation) is typing.Union:
        args = [a for a in typing.get_args(annotation) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return annotation


def add_config_arguments(parser: argparse.ArgumentParser, model: Type[BaseModel]):
    """
    One flag per config field (--snake-case). Defaults are suppressed so only
    flags given on the command line override a --config file.
    """
    for name, field in model.model_fields.items():
        annotation = _unwrap_optional(field.annotation)
        flag = "--" + name.replace("_", "-")
        kwargs = {"dest": name, "default": argparse.SUPPRESS, "help": field.description}
        origin = typing.get_origin(annotation)
        if annotation is bool:
            kwargs["action"] = argparse.BooleanOptionalAction
        elif origin is Literal:
            kwargs["choices"] = [str(c) for c in typing.get_args(annotation)]
        elif origin in (list, List):
            (item,) = typing.get_args(annotation)
            kwargs["nargs"] = "+"
            kwargs["type"] = item
        elif annotation in (int, float, str):
            kwargs["type"] = annotation
        parser.add_argument(flag, **kwargs)
