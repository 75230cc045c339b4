"""
Pydantic models for bandit instances, plans, results and experiment configs
"""
