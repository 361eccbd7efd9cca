'''
This module is mostly to hold a set of utility functions for unit
conversion, key normalization and writing output files.
It is not critical to understand this module to be able to use the library.
'''
import math
import os
import re
import tempfile

from pathlib import Path

from relay_rmt.constants import LN2


def db_to_linear(value_db):
    '''
    Converts a decibel value into linear scale: 10**(x/10).
    Only used at input/output boundaries; everything internal is linear.
    '''
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value):
    '''
    Converts a positive linear value into decibels.
    '''
    assert value > 0, "Cannot convert non-positive value %r to dB." % value
    return 10.0 * math.log10(value)


def nats_to_bits(value):
    return value / LN2


non_alphanum_set = r'[^a-zA-Z0-9]+'
digits_at_start = r'^[0-9]+'

def str_to_identifier(string):
    '''
    Converts given string to a usable identifier. Replaces every sequence
    of invalid non-alphanumeric characters with an underscore.
    Trailing underscores are removed. Used to map config file keys and
    long flag names ("mu-db", "mu_db") onto the same attribute name.
    '''
    assert isinstance(string, str), "Expected str, but got %s" % type(string)

    new_string = re.sub(non_alphanum_set, '_', string.strip())
    new_string = re.sub(digits_at_start, '', new_string)
    new_string = new_string.strip('_')

    assert new_string, "Identifier %r sanitized to an empty string." % (string)

    return new_string


def write_text_atomic(filepath, text, backuppath=None):
    '''
    Writes text to a temp file next to filepath and then renames the
    temp over filepath, so a crashed run never leaves half a CSV behind.
    Backs up an existing filepath to backuppath if given.
    '''
    filepath = Path(filepath)
    assert not filepath.is_dir(), "filepath cannot already exist as a directory."

    filepath.parent.mkdir(parents=True, exist_ok=True)
    fd, temppath = tempfile.mkstemp(
        prefix=filepath.name + ".", suffix=".tmp", dir=str(filepath.parent))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)

        if backuppath is not None and filepath.exists():
            backuppath = Path(backuppath)
            backuppath.parent.mkdir(parents=True, exist_ok=True)
            os.replace(str(filepath), str(backuppath))

        os.replace(temppath, str(filepath))
    except Exception as exc:
        # Restore nothing, but dont leave the temp file lying around.
        try:
            os.remove(temppath)
        except OSError:
            pass
        raise IOError(("ERROR: Could not write output file:\n" +
                       ' '*4 + "%s") % filepath) from exc


def json_safe(value):
    '''
    Returns value with every non-finite float replaced by None, so the
    result can be dumped as strict JSON. Recurses into dicts and sequences.
    '''
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    elif isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    elif isinstance(value, float) and not math.isfinite(value):
        return None
    return value
