"""
.. autoclasstree:: gaugelab.events

Progress reporting for the long-running numerical procedures.
A procedure owns a hub built from one or more event lists; the
event lists declare the callback signatures, and anything that
wants to follow the procedure (the command line, a test spy)
subscribes a handler with a matching signature.

>>> class ScanEvent(EventList):
>>>     @staticmethod
>>>     def scanned(radius: float):
>>>         "A scan finished."
>>>
>>> hub = EventHub(ScanEvent)
>>> hub.subscribe(ScanEvent.scanned, lambda radius: print(radius))
>>> hub.emit(ScanEvent.scanned, 0.5)
0.5
"""

from .event_hub import EventHub
from .event_list import EventList
from .exceptions import NoSuchEventError, NoSuchListenerError, InvalidHandlerError
