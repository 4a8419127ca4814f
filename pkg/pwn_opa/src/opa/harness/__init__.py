'''
Experiment harness: instances, the policy simulation, result export and the command line.
'''
