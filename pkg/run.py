#!/usr/bin/env python3
"""
Main entry point for the photon jump simulator.
Configures logging and hands the command line to photon_jumps.cli.
"""
import logging
import sys

from photon_jumps.cli import main

# Configure root logger
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - [%(threadName)s] - %(message)s'
)

if __name__ == '__main__':
    sys.exit(main())
