'''Decoupled random walks and their limit extremal processes.'''
