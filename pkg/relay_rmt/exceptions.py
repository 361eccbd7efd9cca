'''
This module holds all the exception and warning classes shared by relay_rmt.
'''

__all__ = (
    "RelayRmtError", "ConfigError", "DomainError",
    "NumericalError", "NoValidRootError", "NormalizationWarning",
    )

# ###############################################
# ----      relay_rmt exception classes      ---- #
# ###############################################


class RelayRmtError(Exception):
    '''
    Base relay_rmt exception class.
    '''


class ConfigError(RelayRmtError, ValueError):
    '''
    A configuration failed validation. Every violation is kept
    in self.violations so callers can report them field by field.
    '''
    violations = ()

    def __init__(self, *args, violations=()):
        super().__init__(*args)
        self.violations = tuple(violations)

    def __str__(self):
        head = " ".join(str(arg) for arg in self.args) or "invalid configuration"
        return "\n".join((head, ) + tuple(
            "    %s" % violation for violation in self.violations))


class DomainError(RelayRmtError, ValueError):
    pass


class NumericalError(RelayRmtError, ArithmeticError):
    pass


class NoValidRootError(NumericalError):
    '''
    None of the quartic roots at z passed the Stieltjes branch tests.
    '''
    def __init__(self, z, roots, *args):
        self.z = z
        self.roots = tuple(roots)
        if not args:
            args = ("no valid Stieltjes root at z=%r; roots=%r" % (
                z, self.roots), )
        super().__init__(*args)


class NormalizationWarning(RuntimeWarning):
    pass
