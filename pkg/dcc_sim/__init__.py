"""DCC cross-layer simulator for ETSI and Generate-on-Time CAMs."""
