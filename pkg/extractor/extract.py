#!/usr/bin/env python3
"""Lift an ELF binary to IR text.  See binlift.main for the interface."""

import sys

from binlift.main import main

if __name__ == "__main__":
    sys.exit(main())
