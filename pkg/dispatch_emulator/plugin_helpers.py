# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
import os
import sys
import pathlib
import importlib
from typing import Any, Iterator, Optional, Union


def is_entrypoint_reference(value: str) -> bool:
    modname, separator, qualname = value.partition(":")
    return bool(modname and separator and qualname)


def entrypoint_style_load(
    *args: str, relative: Optional[Union[str, pathlib.Path, bool]] = None
) -> Iterator[Any]:
    """
    Resolve ``package.module:Attr.path`` references, the notation used for
    predictor plugins in run configs.
    """
    # Plugins next to the config are importable without installation
    if relative is not None:
        if relative is True:
            relative = os.getcwd()
        sys.path.insert(0, str(relative))
    try:
        for entry in args:
            modname, _, qualname = entry.partition(":")
            obj = importlib.import_module(modname)
            for attr in qualname.split("."):
                if isinstance(obj, dict):
                    obj = obj[attr]
                else:
                    obj = getattr(obj, attr)
            yield obj
    finally:
        if relative is not None:
            sys.path.pop(0)
