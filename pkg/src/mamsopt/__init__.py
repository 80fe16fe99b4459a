"""Monte Carlo design and evaluation of multi-arm multi-stage t-test trials."""
