from typing import Callable


class EventListMeta(type):

    def __contains__(cls, event: Callable):
        """Checks if the event (by name) is declared on the event list."""
        try:
            return event is getattr(cls, event.__name__)
        except AttributeError:
            return False


class EventList(metaclass=EventListMeta):
    """
    Declares a set of events. Each event is a static method on a
    subclass; its signature is the contract every handler must meet.
    """
