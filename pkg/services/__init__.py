"""
Environments, policies, simulation, analysis and the experiment runner
"""
