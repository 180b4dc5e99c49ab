class NoSuchListenerError(Exception):
    pass


class NoSuchEventError(Exception):
    pass


class InvalidHandlerError(Exception):
    pass
