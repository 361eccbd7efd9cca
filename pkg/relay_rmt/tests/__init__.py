'''
A collection of unittest modules for testing the parameter algebra,
the free probability transforms, capacity, the Monte Carlo oracle and
the command line front end.
'''

__all__ = ['params_test', 'freeprob_test', 'capacity_test',
           'montecarlo_test', 'cli_test', 'util_test', 'acceptance_test']
