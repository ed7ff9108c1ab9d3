#!/usr/bin/env python
# -*- coding: utf-8 -*-

import os
import sys

# Set up paths
current_dir = os.path.dirname(os.path.abspath(__file__))
if current_dir not in sys.path:
    sys.path.append(current_dir)

from src.tools.cli import main
from src.utils.settings import configure_logging

if __name__ == "__main__":
    configure_logging()
    sys.exit(main(sys.argv[1:]))
