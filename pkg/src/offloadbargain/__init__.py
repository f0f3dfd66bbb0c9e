"""Welfare-optimal mobile data offloading and Nash-bargaining payoff division."""
