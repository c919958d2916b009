"""Buffer-request bookkeeping used by :func:`lowrank_gw.oracles.allocation_scope`.

Library code calls :func:`note` whenever it materialises a buffer whose size
depends on the number of samples.  The calls are free when no scope is open.
"""

_scopes = []


def note(size, tag):
    if _scopes:
        size = int(size)
        for scope in _scopes:
            scope._record(size, tag)


def push(scope):
    _scopes.append(scope)


def pop(scope):
    _scopes.remove(scope)
