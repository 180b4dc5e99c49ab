from collections import defaultdict
from inspect import signature, Signature
from typing import Type, Callable, List, Dict, Tuple

from .event_list import EventList
from .exceptions import NoSuchEventError, InvalidHandlerError, NoSuchListenerError


class EventHub:
    """Owns the listeners for every event of the event lists it was built with."""

    def __init__(self, *events: Type[EventList]):
        self._event_lists: Tuple[Type[EventList], ...] = events
        self._listeners: Dict[Callable, List[Callable]] = defaultdict(list)

    def __contains__(self, item) -> bool:
        """Checks if the hub carries the given event or event list."""
        if isinstance(item, type) and issubclass(item, EventList):
            return item in self._event_lists
        return any(item in event_list for event_list in self._event_lists)

    def emit(self, event: Callable, *args, **kwargs):
        """Calls every handler of the event in subscription order."""
        if event not in self:
            raise NoSuchEventError(f"{getattr(event, '__name__', event)} is not emitted by this hub.")
        for handler in self._listeners[event]:
            handler(*args, **kwargs)

    def subscribe(self, event: Callable, handler: Callable):
        """
        :param event: The event to listen for.
        :param handler: A callable with the same parameter names as the event.
        :raises InvalidHandlerError: If the handler signature does not match.
        """
        if event not in self:
            raise NoSuchEventError(f"{getattr(event, '__name__', event)} is not emitted by this hub.")

        expected = [(name, p.annotation) for name, p in signature(event).parameters.items() if name != "self"]
        offered = [(name, p.annotation) for name, p in signature(handler).parameters.items() if name != "self"]

        if [name for name, _ in expected] != [name for name, _ in offered]:
            raise InvalidHandlerError("Handler parameters do not match the event.", event.__name__, handler)

        for (name, wanted), (_, given) in zip(expected, offered):
            if wanted is not Signature.empty and given is not Signature.empty and wanted is not given:
                raise InvalidHandlerError(f"Conflicting annotations for parameter \"{name}\".", event.__name__, handler)

        self._listeners[event].append(handler)

    def unsubscribe(self, event: Callable, handler: Callable):
        try:
            self._listeners[event].remove(handler)
        except ValueError:
            raise NoSuchListenerError(f"{handler} is not subscribed to {getattr(event, '__name__', event)}")
