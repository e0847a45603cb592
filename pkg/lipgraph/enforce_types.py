"""Runtime checks of annotated argument types.

Decorating a class wraps all of its member functions; decorating a function
wraps just that function. Annotations are resolved with ``typing.get_type_hints``
so modules using postponed annotations work too. Numeric annotations accept
numpy scalars (``float`` also accepts ints), ``Optional``/``Union`` check each
member, and anything that cannot be checked with ``isinstance`` is skipped.
"""

import inspect
import numbers
import typing
from contextlib import suppress
from functools import wraps

import numpy as np

_NUMERIC = {
    float: (numbers.Real,),
    int: (numbers.Integral,),
    complex: (numbers.Complex,),
}


def _runtime_types(type_hint):
    """Tuple of classes usable with isinstance, or None when unchecked."""
    if type_hint is typing.Any or isinstance(type_hint, typing.TypeVar):
        return None
    if isinstance(type_hint, str):
        return None
    origin = typing.get_origin(type_hint)
    if origin is typing.Union:
        collected = []
        for arg in typing.get_args(type_hint):
            sub = _runtime_types(arg)
            if sub is None:
                return None
            collected.extend(sub)
        return tuple(collected)
    if origin is not None:
        return _runtime_types(origin) if origin is not type_hint else None
    if type_hint is type(None):
        return (type(None),)
    if type_hint in _NUMERIC:
        return _NUMERIC[type_hint]
    if inspect.isclass(type_hint):
        if type_hint is np.ndarray:
            return (np.ndarray,)
        return (type_hint,)
    return None


def enforce_types(target):
    """Class or function decorator adding argument type checks."""

    def check_types(func, spec, hints, *args, **kwargs):
        parameters = dict(zip(spec.args, args))
        parameters.update(kwargs)
        for name, value in parameters.items():
            with suppress(KeyError):  # un-annotated parameters can be any type
                allowed = _runtime_types(hints[name])
                if allowed is None:
                    continue
                if isinstance(value, bool) and bool not in allowed and numbers.Integral in allowed:
                    raise TypeError("Unexpected type for '{}' in {} (expected {} but found bool)"
                                    .format(name, func.__qualname__, hints[name]))
                if not isinstance(value, allowed):
                    raise TypeError("Unexpected type for '{}' in {} (expected {} but found {})"
                                    .format(name, func.__qualname__, hints[name], type(value)))

    def decorate(func):
        spec = inspect.getfullargspec(func)
        hints = {}

        @wraps(func)
        def wrapper(*args, **kwargs):
            if not hints:
                try:
                    hints.update(typing.get_type_hints(func))
                except (NameError, TypeError):
                    hints.update({k: v for k, v in spec.annotations.items()
                                  if not isinstance(v, str)})
                hints.setdefault("__resolved__", None)
            check_types(func, spec, hints, *args, **kwargs)
            return func(*args, **kwargs)

        return wrapper

    if inspect.isclass(target):
        members = inspect.getmembers(target, predicate=inspect.isfunction)
        for name, func in members:
            if name.startswith("__") and name not in ("__init__", "__call__"):
                continue
            raw = inspect.getattr_static(target, name)
            if isinstance(raw, staticmethod):
                setattr(target, name, staticmethod(decorate(func)))
            else:
                setattr(target, name, decorate(func))

        return target
    else:
        return decorate(target)
