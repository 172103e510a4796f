"""Datagram secure channel with hybrid-ready key exchange and signatures."""
