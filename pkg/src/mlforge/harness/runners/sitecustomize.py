"""Socket guard injected into sandboxed runs: any network attempt raises."""
import socket


class _NetworkDisabled(OSError):
    pass


def _blocked(*args, **kwargs):
    raise _NetworkDisabled("network access is disabled inside the sandbox")


socket.socket.connect = _blocked
socket.socket.connect_ex = _blocked
socket.create_connection = _blocked
socket.getaddrinfo = _blocked
