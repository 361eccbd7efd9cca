'''
A module that implements a FrozenDict class, an immutable mapping used
for the preset tables and for layering configuration sources on top of
each other without mutating any of them.
'''

__all__ = ('FrozenDict', 'freeze')

# what pytype to convert a mutable python object into
mutable_typemap = {list: tuple, set: frozenset}


def freeze(value):
    '''
    Returns an immutable version of value. dicts become FrozenDicts,
    lists become tuples and sets become frozensets, recursively.
    Anything else is returned as is.
    '''
    v_type = type(value)
    if isinstance(value, FrozenDict):
        return value
    elif isinstance(value, dict):
        return FrozenDict(value)
    elif v_type in (list, tuple):
        return tuple(freeze(v) for v in value)
    elif v_type in mutable_typemap:
        return mutable_typemap[v_type](value)
    return value


class FrozenDict(dict):
    __slots__ = ()

    def __init__(self, initializer=(), **kw):
        '''
        Builds the mapping from a dict or an iterable of (key, value)
        pairs plus keyword arguments. Every value is frozen on the way in.
        '''
        # make sure the FrozenDict hasnt already been built
        if self:
            return

        if isinstance(initializer, dict):
            initializer = initializer.items()

        for key, value in initializer:
            dict.__setitem__(self, key, freeze(value))

        for key, value in kw.items():
            dict.__setitem__(self, key, freeze(value))

    def __delitem__(self, key):
        raise TypeError('%s does not support item deletion' % type(self))

    def __setitem__(self, key, value):
        raise TypeError('%s does not support item assignment' % type(self))

    def __copy__(self):
        return self

    def __deepcopy__(self, memo=None):
        return self

    def __repr__(self):
        return "FrozenDict(%s)" % dict.__repr__(self)

    def __hash__(self):
        return hash(tuple(self.keys())) ^ hash(tuple(self.values()))

    def clear(self):
        raise TypeError('%s does not support item clearing' % type(self))

    def copyadd(self, k_v_pairs=(), **initdata):
        '''
        Returns an updated copy of this FrozenDict. Pairs are applied
        first, then keyword arguments, so later sources win. Values
        of None are skipped so unset command line flags never shadow
        a value coming from a preset or a config file.
        '''
        if isinstance(k_v_pairs, dict):
            k_v_pairs = k_v_pairs.items()

        merged = dict(self)
        for key, value in tuple(k_v_pairs) + tuple(initdata.items()):
            if value is not None:
                merged[key] = value
        return FrozenDict(merged)

    def pop(self, key, default=None):
        raise TypeError('%s does not support item removal' % type(self))

    def popitem(self):
        raise TypeError('%s does not support item removal' % type(self))

    def setdefault(self, key, value):
        raise TypeError('%s does not support item assignment' % type(self))

    def update(self, k_v_pairs=None, **initdata):
        raise TypeError('%s does not support item assignment' % type(self))
