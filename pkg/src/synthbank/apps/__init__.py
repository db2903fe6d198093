"""Banking-domain information products used to score synthetic data utility."""
