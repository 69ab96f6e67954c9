"""
Domain services: KE computation, OpenAlex access, cohorts and statistics.
"""
