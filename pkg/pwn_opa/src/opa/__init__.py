'''
Personalised resource-block allocation: surrogate-assisted multi-objective
optimisation of a single-cell downlink and the experiments around it.
'''

__version__ = '1.0.0'
