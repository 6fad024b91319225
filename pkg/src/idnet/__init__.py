"""Simulator for the id/anti-id TH1-TH2 immune network."""
